//! Channel generation: the near-field BS→SIM link, inter-layer links,
//! far-field SIM→user/eavesdropper vectors and CSI perturbations.

use crate::linalg::{cis, CMat, CVec, C64};
use crate::scenario::{
    derive_stream, distance, stream_index, ArrayGeometry, ChannelMode, Point3, Polar, PurposeTag, RngStream,
    ScenarioConfig,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("coincident elements at zero distance")]
    ZeroDistance,
    #[error("rician factor {0} outside [0, 1]")]
    InvalidRicianFactor(f64),
    #[error("layer index {0} has no preceding layer")]
    BadLayer(usize),
}

/// Wavelength and element positions relative to a reference point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringContext {
    pub wavelength: f64,
    pub positions: Vec<Point3>,
    pub origin: Point3,
}

impl SteeringContext {
    /// Output layer of `geom`, referenced to its centre.
    pub fn output_layer(geom: &ArrayGeometry) -> SteeringContext {
        SteeringContext {
            wavelength: geom.wavelength,
            positions: geom.sim_layer_positions.last().cloned().unwrap_or_default(),
            origin: geom.output_center,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Point at polar coordinates (θ, r) in the horizontal plane.
    pub fn point(&self, theta: f64, r: f64) -> Point3 {
        [self.origin[0] + r * theta.cos(), self.origin[1] + r * theta.sin(), self.origin[2]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// H^(1), N_1×M.
    pub h_bs_sim: CMat,
    /// H^(l) for l ≥ 2, N_l×N_{l−1}.
    pub inter_layer: Vec<CMat>,
    pub sim_to_user: Vec<CVec>,
    /// Eavesdropper vectors at their nominal locations.
    pub sim_to_eve: Vec<CVec>,
    /// Per-user bound ε_k on ‖Δh_k‖.
    pub csi_error_bound: Vec<f64>,
    pub user_locations: Vec<Polar>,
    pub eve_locations: Vec<Polar>,
    pub output: SteeringContext,
    pub path_loss_exponent: f64,
    pub reference_distance: f64,
}

impl ChannelSet {
    /// Link feeding layer `l` (0-based): H^(1) for l = 0.
    pub fn link(&self, l: usize) -> &CMat {
        if l == 0 {
            &self.h_bs_sim
        } else {
            &self.inter_layer[l - 1]
        }
    }

    pub fn layers(&self) -> usize {
        1 + self.inter_layer.len()
    }

    pub fn layer_size(&self, l: usize) -> usize {
        self.link(l).nrows()
    }

    /// Text dump of every matrix and vector, in link order then users then
    /// eavesdroppers, each block in the fixture matrix format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in 0..self.layers() {
            out.push_str(&crate::linalg::matrix_to_text(self.link(l)));
        }
        for v in self.sim_to_user.iter().chain(&self.sim_to_eve) {
            out.push_str(&crate::linalg::matrix_to_text(&CMat::from_column_slice(v.len(), 1, v.as_slice())));
        }
        out
    }

    pub fn bs_antennas(&self) -> usize {
        self.h_bs_sim.ncols()
    }

    /// SIM→node vector for an arbitrary location, with the path loss of the
    /// configured law.
    pub fn node_vector(&self, p: Polar) -> CVec {
        let rho = path_loss(p.range, self.reference_distance, self.path_loss_exponent);
        far_field_vector(p.theta, p.range, &self.output, rho)
    }
}

/// ρ = (d/d0)^n.
pub fn path_loss(d: f64, d0: f64, n: f64) -> f64 {
    (d / d0).powf(n)
}

/// Spherical-wave kernel (λ/(4πr))·e^{−j2πr/λ} between every rx/tx pair.
pub fn near_field_matrix(rx: &[Point3], tx: &[Point3], wavelength: f64) -> Result<CMat, ChannelError> {
    let mut h = CMat::zeros(rx.len(), tx.len());
    for (n, p) in rx.iter().enumerate() {
        for (m, q) in tx.iter().enumerate() {
            let r = distance(p, q);
            if r <= 0.0 {
                return Err(ChannelError::ZeroDistance);
            }
            h[(n, m)] = cis(-2.0 * PI * r / wavelength) * (wavelength / (4.0 * PI * r));
        }
    }
    Ok(h)
}

/// H^(1): BS array to the first layer.
pub fn bs_sim_near_field(geom: &ArrayGeometry, wavelength: f64) -> Result<CMat, ChannelError> {
    near_field_matrix(&geom.sim_layer_positions[0], &geom.bs_positions, wavelength)
}

/// i.i.d. CN(0,1) matrix.
pub fn complex_gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * s, im * s)
    })
}

/// H^(l) for layer index `l ≥ 1` (0-based), fed by layer `l−1`.
pub fn inter_layer(
    geom: &ArrayGeometry,
    l: usize,
    wavelength: f64,
    rician_k: f64,
    stream: &RngStream,
    mode: ChannelMode,
) -> Result<CMat, ChannelError> {
    if !(0.0..=1.0).contains(&rician_k) {
        return Err(ChannelError::InvalidRicianFactor(rician_k));
    }
    if l == 0 || l >= geom.sim_layer_positions.len() {
        return Err(ChannelError::BadLayer(l));
    }
    let los = near_field_matrix(&geom.sim_layer_positions[l], &geom.sim_layer_positions[l - 1], wavelength)?;
    match mode {
        ChannelMode::LosOnly => Ok(los),
        ChannelMode::Rician => {
            let mut rng = stream.rng();
            let nlos = complex_gaussian(los.nrows(), los.ncols(), &mut rng);
            Ok(los * C64::from(rician_k.sqrt()) + nlos * C64::from((1.0 - rician_k).sqrt()))
        }
    }
}

/// √(1/ρ)·exp(−j2π(r − q_n·u)/λ) with u the unit vector towards θ in the
/// horizontal plane and q_n the element offsets from the context origin.
pub fn far_field_vector(theta: f64, r: f64, ctx: &SteeringContext, rho: f64) -> CVec {
    let u = [theta.cos(), theta.sin(), 0.0];
    let amp = (1.0 / rho).sqrt();
    CVec::from_iterator(
        ctx.positions.len(),
        ctx.positions.iter().map(|p| {
            let proj = (p[0] - ctx.origin[0]) * u[0] + (p[1] - ctx.origin[1]) * u[1] + (p[2] - ctx.origin[2]) * u[2];
            cis(-2.0 * PI * (r - proj) / ctx.wavelength) * amp
        }),
    )
}

/// Uniform draw from the complex ball of radius `bound` in C^dim.
pub fn sample_csi_error(dim: usize, bound: f64, rng: &mut ChaCha8Rng) -> CVec {
    if bound <= 0.0 || dim == 0 {
        return CVec::zeros(dim);
    }
    let g = complex_gaussian(dim, 1, rng).column(0).into_owned();
    let n = g.norm();
    let u: f64 = rng.random::<f64>();
    let radius = bound * u.powf(1.0 / (2.0 * dim as f64));
    let mut out = if n > 0.0 { g * C64::from(radius / n) } else { CVec::zeros(dim) };
    // Guard against rounding pushing the norm a hair above the bound.
    let m = out.norm();
    if m > bound {
        out *= C64::from(bound / m);
    }
    out
}

/// Independent uniform perturbation of angle and range.
pub fn sample_eve_uncertainty(nominal: Polar, angle_spread: f64, range_spread: f64, rng: &mut ChaCha8Rng) -> Polar {
    let mut draw = |s: f64| if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
    let dt = draw(angle_spread);
    let dr = draw(range_spread);
    Polar { theta: nominal.theta + dt, range: (nominal.range + dr).max(1e-3) }
}

/// Full channel realization of a scenario.
pub fn generate_channels(config: &ScenarioConfig, geom: &ArrayGeometry) -> Result<ChannelSet, ChannelError> {
    let lambda = geom.wavelength;
    let h_bs_sim = bs_sim_near_field(geom, lambda)?;
    let mut links = Vec::new();
    for l in 1..config.layers {
        let stream = derive_stream(config, PurposeTag::Channel, stream_index::LAYER_BASE + l as u64);
        links.push(inter_layer(geom, l, lambda, config.rician_k[l], &stream, config.channel_mode)?);
    }
    let output = SteeringContext::output_layer(geom);
    let mut set = ChannelSet {
        h_bs_sim,
        inter_layer: links,
        sim_to_user: Vec::new(),
        sim_to_eve: Vec::new(),
        csi_error_bound: Vec::new(),
        user_locations: geom.users.clone(),
        eve_locations: geom.eavesdroppers.clone(),
        output,
        path_loss_exponent: config.path_loss_exponent,
        reference_distance: config.reference_distance,
    };
    set.sim_to_user = geom.users.iter().map(|&p| set.node_vector(p)).collect();
    set.sim_to_eve = geom.eavesdroppers.iter().map(|&p| set.node_vector(p)).collect();
    set.csi_error_bound = set.sim_to_user.iter().map(|h| config.csi_error_bound * h.norm()).collect();
    Ok(set)
}

/// Geometry plus channels in one call.
pub fn realize(config: &ScenarioConfig) -> Result<(ArrayGeometry, ChannelSet), ChannelError> {
    let geom = ArrayGeometry::build(config);
    let ch = generate_channels(config, &geom)?;
    Ok((geom, ch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn scalar_kernel() {
        let lambda = 0.01;
        let h = near_field_matrix(&[[1.0, 0.0, 0.0]], &[[0.0, 0.0, 0.0]], lambda).unwrap();
        assert!((h[(0, 0)].norm() - lambda / (4.0 * PI)).abs() < 1e-15);
        assert_eq!(near_field_matrix(&[[0.0; 3]], &[[0.0; 3]], lambda), Err(ChannelError::ZeroDistance));
    }

    #[test]
    fn broadside_equal_phases() {
        let ctx = SteeringContext {
            wavelength: 0.01,
            positions: (0..4).map(|i| [0.0, i as f64 * 0.005, 0.0]).collect(),
            origin: [0.0; 3],
        };
        let v = far_field_vector(0.0, 10.0, &ctx, 1.0);
        for x in v.iter() {
            assert!((x - v[0]).norm() < 1e-12);
        }
        let w = far_field_vector(0.3, 10.0, &ctx, 4.0);
        let w1 = far_field_vector(0.3, 10.0, &ctx, 1.0);
        assert!((w.norm() * 2.0 - w1.norm()).abs() < 1e-12);
    }

    #[test]
    fn csi_error_zero_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_csi_error(5, 0.0, &mut rng).norm(), 0.0);
    }

    #[test]
    fn channel_dimensions() {
        let c = default_scenario().desk_scale();
        let (_, ch) = realize(&c).unwrap();
        assert_eq!(ch.h_bs_sim.shape(), (16, 8));
        assert_eq!(ch.inter_layer.len(), 1);
        assert_eq!(ch.inter_layer[0].shape(), (16, 16));
        assert_eq!(ch.sim_to_user.len(), 2);
        assert_eq!(ch.sim_to_eve.len(), 1);
        assert!(ch.csi_error_bound.iter().all(|&e| e > 0.0));
    }
}
