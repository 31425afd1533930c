//! Sensing-phase signal model, Fisher information, CRB and Block A.
//!
//! The probe `X` (M×S) leaves the BS, passes the cascade `G` and illuminates
//! the target; the echo is received coherently on the output layer:
//!
//! μ_s = β·a(θ,r)·(a(θ,r)ᵀ·G·x_s)·e^{jψ_s},
//! β = √σ_RCS·(r/d0)^{−n/2}·e^{jφ},  ψ_s = 2π·(2v/λ)·(s/S),
//!
//! where a_n = e^{−j2π d_n/λ} uses the exact distance from output element n
//! to the target. The interest block is (θ, r, v); σ_RCS is the nuisance and
//! φ is treated as known.

use crate::channel::{ChannelSet, SteeringContext};
use crate::linalg::{cis, CMat, CVec, C64};
use crate::metasurface::{
    cascade, cascade_parts, hinge_reconfig, phase_gradient, project_reconfig_ball, rcg_minimize, reconfig_distance,
    MetasurfaceError, PhaseProfile, Purpose, RcgOptions,
};
use crate::scenario::{ScenarioConfig, TargetPlacement};
use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SensingError {
    #[error("target range must be positive, got {0}")]
    BadRange(f64),
    #[error("interest block of the FIM is singular (unidentifiable target)")]
    Singular,
    #[error("sensing energy floor exceeds the available budget")]
    InfeasibleEnergy,
    #[error("empty search grid")]
    EmptyGrid,
    #[error(transparent)]
    Metasurface(#[from] MetasurfaceError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    pub theta: f64,
    pub range: f64,
    pub velocity: f64,
    pub rcs: f64,
    pub phase: f64,
}

impl From<&TargetPlacement> for TargetParams {
    fn from(t: &TargetPlacement) -> Self {
        TargetParams { theta: t.theta, range: t.range, velocity: t.velocity, rcs: t.rcs, phase: t.reflection_phase }
    }
}

/// Everything the sensing model needs besides the cascade and the target.
#[derive(Clone, Debug)]
pub struct SensingModel {
    pub output: SteeringContext,
    pub path_loss_exponent: f64,
    pub reference_distance: f64,
    pub snapshots: usize,
    pub noise_power: f64,
    pub bs_antennas: usize,
}

/// Output-layer steering vector and its partial derivatives.
#[derive(Clone, Debug)]
pub struct Steering {
    pub a: CVec,
    pub a_theta: CVec,
    pub a_range: CVec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FimResult {
    /// Ordering (θ, r, v, σ_RCS).
    pub j: Matrix4<f64>,
    /// |β|²/σ_eff².
    pub snr_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetCrb {
    pub crb_exact: f64,
    pub crb_approx: f64,
    pub error_bound: f64,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub per_target: Vec<TargetCrb>,
    pub total_exact: f64,
    pub total_approx: f64,
    pub regularizer: Vec<f64>,
    pub approx_error_bound: f64,
    /// Set when there are no targets.
    pub empty: bool,
}

impl SensingModel {
    pub fn new(config: &ScenarioConfig, ch: &ChannelSet) -> SensingModel {
        SensingModel {
            output: ch.output.clone(),
            path_loss_exponent: config.path_loss_exponent,
            reference_distance: config.reference_distance,
            snapshots: config.snapshots,
            noise_power: config.noise_power,
            bs_antennas: ch.bs_antennas(),
        }
    }

    pub fn wavelength(&self) -> f64 {
        self.output.wavelength
    }

    pub fn steering(&self, theta: f64, r: f64) -> Steering {
        let k = 2.0 * PI / self.wavelength();
        let p = self.output.point(theta, r);
        let dp_dtheta = [-r * theta.sin(), r * theta.cos(), 0.0];
        let dp_dr = [theta.cos(), theta.sin(), 0.0];
        let n = self.output.len();
        let (mut a, mut at, mut ar) = (CVec::zeros(n), CVec::zeros(n), CVec::zeros(n));
        for (i, q) in self.output.positions.iter().enumerate() {
            let diff = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
            let d = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
            let dd_t = (diff[0] * dp_dtheta[0] + diff[1] * dp_dtheta[1]) / d;
            let dd_r = (diff[0] * dp_dr[0] + diff[1] * dp_dr[1]) / d;
            let ai = cis(-k * d);
            a[i] = ai;
            at[i] = ai * C64::new(0.0, -k * dd_t);
            ar[i] = ai * C64::new(0.0, -k * dd_r);
        }
        Steering { a, a_theta: at, a_range: ar }
    }

    /// β = √σ·(r/d0)^{−n/2}·e^{jφ}.
    pub fn reflection(&self, t: &TargetParams) -> C64 {
        cis(t.phase) * (t.rcs.sqrt() * (t.range / self.reference_distance).powf(-self.path_loss_exponent / 2.0))
    }

    /// Doppler phase rate ∂ψ_s/∂v.
    pub fn doppler_rate(&self, s: usize) -> f64 {
        2.0 * PI * (2.0 / self.wavelength()) * (s as f64 / self.snapshots as f64)
    }

    /// Orthogonal probe with X·Xᴴ = p·I (partial DFT, M×S).
    pub fn probe(&self, p_sense: f64) -> CMat {
        let (m, s) = (self.bs_antennas, self.snapshots);
        let amp = (p_sense / s as f64).sqrt();
        CMat::from_fn(m, s, |i, j| cis(-2.0 * PI * (i * j) as f64 / s as f64) * amp)
    }

    /// Noiseless echo μ (N_L×S).
    pub fn snapshot_mean(&self, t: &TargetParams, g: &CMat, p_sense: f64) -> CMat {
        let st = self.steering(t.theta, t.range);
        let x = self.probe(p_sense);
        let q = st.a.transpose() * g * &x;
        let beta = self.reflection(t);
        CMat::from_fn(st.a.len(), self.snapshots, |n, s| {
            beta * st.a[n] * q[(0, s)] * cis(2.0 * PI * (2.0 * t.velocity / self.wavelength()) * s as f64 / self.snapshots as f64)
        })
    }

    /// ∂μ/∂ξ for ξ = (θ, r, v, σ), each N_L×S, by direct evaluation.
    pub fn mean_derivatives(&self, t: &TargetParams, g: &CMat, p_sense: f64) -> [CMat; 4] {
        let st = self.steering(t.theta, t.range);
        let x = self.probe(p_sense);
        let gx = g * &x;
        let q = st.a.transpose() * &gx;
        let qt = st.a_theta.transpose() * &gx;
        let qr = st.a_range.transpose() * &gx;
        let beta = self.reflection(t);
        let lam = self.wavelength();
        let npl = self.path_loss_exponent;
        let n = st.a.len();
        let ss = self.snapshots;
        let dop = |s: usize| cis(2.0 * PI * (2.0 * t.velocity / lam) * s as f64 / ss as f64);
        let mu = |i: usize, s: usize| beta * st.a[i] * q[(0, s)] * dop(s);
        let d_theta = CMat::from_fn(n, ss, |i, s| beta * (st.a_theta[i] * q[(0, s)] + st.a[i] * qt[(0, s)]) * dop(s));
        let d_range = CMat::from_fn(n, ss, |i, s| {
            beta * (st.a_range[i] * q[(0, s)] + st.a[i] * qr[(0, s)]) * dop(s) - mu(i, s) * (npl / (2.0 * t.range))
        });
        let d_vel = CMat::from_fn(n, ss, |i, s| mu(i, s) * C64::new(0.0, self.doppler_rate(s)));
        let d_rcs = CMat::from_fn(n, ss, |i, s| mu(i, s) / (2.0 * t.rcs));
        [d_theta, d_range, d_vel, d_rcs]
    }

    /// FIM from explicit derivatives; `tau_sense` scales the effective noise
    /// as σ²/τ.
    pub fn fim_direct(&self, t: &TargetParams, g: &CMat, p_sense: f64, tau_sense: f64) -> FimResult {
        let d = self.mean_derivatives(t, g, p_sense);
        let sigma_eff = self.noise_power / tau_sense;
        let mut j = Matrix4::zeros();
        for a in 0..4 {
            for b in 0..4 {
                let v: f64 = d[a].iter().zip(d[b].iter()).map(|(x, y)| (x.conj() * y).re).sum();
                j[(a, b)] = 2.0 / sigma_eff * v;
            }
        }
        FimResult { j, snr_scale: self.reflection(t).norm_sqr() / sigma_eff }
    }

    /// Y = Pᵀ·G·X with P = [a, a_θ, a_r] (3×S).
    fn projected(&self, st: &Steering, g: &CMat, x: &CMat) -> CMat {
        let n = st.a.len();
        let mut pt = CMat::zeros(3, n);
        for i in 0..n {
            pt[(0, i)] = st.a[i];
            pt[(1, i)] = st.a_theta[i];
            pt[(2, i)] = st.a_range[i];
        }
        (pt * g) * x
    }

    /// Fast FIM through the 3-dimensional projection Y.
    pub fn fim(&self, t: &TargetParams, g: &CMat, p_sense: f64, tau_sense: f64) -> Result<FimResult, SensingError> {
        if !(t.range > 0.0) {
            return Err(SensingError::BadRange(t.range));
        }
        let st = self.steering(t.theta, t.range);
        let y = self.projected(&st, g, &self.probe(p_sense));
        let gamma = gram(&st);
        let sigma_eff = self.noise_power / tau_sense;
        let beta2 = self.reflection(t).norm_sqr();
        let c = 2.0 * beta2 / sigma_eff;
        let mut j = Matrix4::zeros();
        for s in 0..self.snapshots {
            let ys = Vector3::new(y[(0, s)], y[(1, s)], y[(2, s)]);
            let tv: [Vector3<C64>; 4] = self.transformed(t, s, &ys);
            let gt: [Vector3<C64>; 4] = [gamma * tv[0], gamma * tv[1], gamma * tv[2], gamma * tv[3]];
            for a in 0..4 {
                for b in a..4 {
                    let v = tv[a].dotc(&gt[b]).re;
                    j[(a, b)] += c * v;
                }
            }
        }
        for a in 0..4 {
            for b in 0..a {
                j[(a, b)] = j[(b, a)];
            }
        }
        Ok(FimResult { j, snr_scale: beta2 / sigma_eff })
    }

    /// T_i·y_s for the four parameters.
    fn transformed(&self, t: &TargetParams, s: usize, y: &Vector3<C64>) -> [Vector3<C64>; 4] {
        let z = C64::new(0.0, 0.0);
        let k = self.path_loss_exponent / (2.0 * t.range);
        [
            Vector3::new(y[1], y[0], z),
            Vector3::new(y[2] - y[0] * k, z, y[0]),
            Vector3::new(y[0] * C64::new(0.0, self.doppler_rate(s)), z, z),
            Vector3::new(y[0] / (2.0 * t.rcs), z, z),
        ]
    }

    /// (p/M)·‖aᵀ·G‖².
    pub fn illumination_gain(&self, theta: f64, r: f64, g: &CMat, p_sense: f64) -> f64 {
        let a = self.steering(theta, r).a;
        (a.transpose() * g).norm_squared() * p_sense / self.bs_antennas as f64
    }

    pub fn crb_total(&self, targets: &[TargetParams], g: &CMat, p_sense: f64, tau_sense: f64) -> CrbReport {
        let mut per = Vec::with_capacity(targets.len());
        let mut regs = Vec::with_capacity(targets.len());
        for t in targets {
            match self.fim(t, g, p_sense, tau_sense) {
                Ok(f) => {
                    let (reg, out) = schur_bound(&f.j);
                    regs.push(reg);
                    per.push(out.unwrap_or_else(|e| failed(e.to_string())));
                }
                Err(e) => {
                    regs.push(0.0);
                    per.push(failed(e.to_string()));
                }
            }
        }
        let ok = per.iter().filter(|p| p.failure.is_none());
        let total_exact = ok.clone().map(|p| p.crb_exact).sum();
        let total_approx = ok.clone().map(|p| p.crb_approx).sum();
        let approx_error_bound = ok.map(|p| p.error_bound).sum();
        CrbReport { empty: targets.is_empty(), per_target: per, total_exact, total_approx, regularizer: regs, approx_error_bound }
    }

    /// Σ_targets Tr(J11⁻¹) and its phase gradient for layer `l`.
    pub fn crb_layer_gradient(
        &self,
        targets: &[TargetParams],
        a: &CMat,
        b: &CMat,
        phi: &[C64],
        p_sense: f64,
        tau_sense: f64,
    ) -> Result<(f64, Vec<f64>), SensingError> {
        let mut scaled_a = a.clone();
        crate::metasurface::scale_rows(&mut scaled_a, phi);
        let g = b * &scaled_a;
        let x = self.probe(p_sense);
        let ax = a * &x;
        let mut total = 0.0;
        let mut coeff = vec![C64::new(0.0, 0.0); phi.len()];
        for t in targets {
            let st = self.steering(t.theta, t.range);
            let fim = self.fim(t, &g, p_sense, tau_sense)?;
            let j11 = fim.j.fixed_view::<3, 3>(0, 0).into_owned();
            let inv = j11.try_inverse().ok_or(SensingError::Singular)?;
            total += inv.trace();
            let omega = -(inv * inv);
            let c = 2.0 * fim.snr_scale;
            let gamma = gram(&st);
            let y = self.projected(&st, &g, &x);
            let mut ghat = CMat::zeros(3, self.snapshots);
            for s in 0..self.snapshots {
                let ys = Vector3::new(y[(0, s)], y[(1, s)], y[(2, s)]);
                let tv = self.transformed(t, s, &ys);
                // H_s·y_s = Σ_ij Ω_ij T_iᴴ Γ T_j y_s over the interest block.
                let mut acc = Vector3::<C64>::zeros();
                for i in 0..3 {
                    let mut inner = Vector3::<C64>::zeros();
                    for jx in 0..3 {
                        inner += tv[jx] * C64::from(omega[(i, jx)]);
                    }
                    let gi = gamma * inner;
                    acc += self.transpose_apply(t, s, i, &gi);
                }
                for r in 0..3 {
                    ghat[(r, s)] = acc[r];
                }
            }
            let mut pt = CMat::zeros(3, st.a.len());
            for i in 0..st.a.len() {
                pt[(0, i)] = st.a[i];
                pt[(1, i)] = st.a_theta[i];
                pt[(2, i)] = st.a_range[i];
            }
            let ptb = pt * b;
            let m = ghat * ax.adjoint();
            for n in 0..phi.len() {
                let mut w = C64::new(0.0, 0.0);
                for r in 0..3 {
                    w += ptb[(r, n)].conj() * m[(r, n)];
                }
                // df = 2c·Re Σ conj(dφ_n)·w_n.
                coeff[n] += w.conj() * c;
            }
        }
        Ok((total, phase_gradient(&coeff, phi)))
    }

    /// T_iᴴ·v for parameter i.
    fn transpose_apply(&self, t: &TargetParams, s: usize, i: usize, v: &Vector3<C64>) -> Vector3<C64> {
        let z = C64::new(0.0, 0.0);
        let k = self.path_loss_exponent / (2.0 * t.range);
        match i {
            0 => Vector3::new(v[1], v[0], z),
            1 => Vector3::new(v[0] * (-k) + v[2], z, v[0]),
            2 => Vector3::new(v[0] * C64::new(0.0, -self.doppler_rate(s)), z, z),
            _ => Vector3::new(v[0] / (2.0 * t.rcs), z, z),
        }
    }
}

fn gram(st: &Steering) -> Matrix3<C64> {
    let cols = [&st.a, &st.a_theta, &st.a_range];
    Matrix3::from_fn(|i, j| cols[i].dotc(cols[j]))
}

fn failed(msg: String) -> TargetCrb {
    TargetCrb { crb_exact: f64::NAN, crb_approx: f64::NAN, error_bound: f64::NAN, failure: Some(msg) }
}

/// Schur split of a 4×4 FIM with interest (θ, r, v) and nuisance σ.
///
/// Returns the regularizer ε = 1e−9·Tr(J)/4 added to J22, and the
/// exact CRB Tr((J11 − J12 J22⁻¹ J21)⁻¹), the surrogate Tr(J11⁻¹) and the
/// bound ‖J12‖_F²·Tr(J11⁻²)/(λ_min(J22) − ‖J12‖_F²‖J11⁻¹‖₂) (+∞ when the
/// denominator is not positive).
pub fn schur_bound(j: &Matrix4<f64>) -> (f64, Result<TargetCrb, SensingError>) {
    let eps = 1e-9 * j.trace().abs() / 4.0;
    let j11 = j.fixed_view::<3, 3>(0, 0).into_owned();
    let j12 = j.fixed_view::<3, 1>(0, 3).into_owned();
    let j22 = j[(3, 3)] + eps;
    let Some(inv11) = j11.try_inverse() else { return (eps, Err(SensingError::Singular)) };
    if j22 <= 0.0 {
        return (eps, Err(SensingError::Singular));
    }
    let schur = j11 - j12 * j12.transpose() / j22;
    let Some(inv_s) = schur.try_inverse() else { return (eps, Err(SensingError::Singular)) };
    let crb_exact = inv_s.trace();
    let crb_approx = inv11.trace();
    let c2 = j12.norm_squared();
    let inv11_sym = (inv11 + inv11.transpose()) * 0.5;
    let norm2 = SymmetricEigen::new(inv11_sym).eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let denom = j22 - c2 * norm2;
    let error_bound = if denom > 0.0 { c2 * (inv11 * inv11).trace() / denom } else { f64::INFINITY };
    (eps, Ok(TargetCrb { crb_exact, crb_approx, error_bound, failure: None }))
}

pub fn targets_from(config: &ScenarioConfig, geom: &crate::scenario::ArrayGeometry) -> Vec<TargetParams> {
    let _ = config;
    geom.targets.iter().map(TargetParams::from).collect()
}

// ---------------------------------------------------------------------------
// Block A
// ---------------------------------------------------------------------------

/// Inputs of the sensing-profile block. The objective minimized is
/// `weight·Σ Tr(J11⁻¹) + λ_Φ·Σ_l [d_l(comm, sense) − δ_l]₊`.
pub struct SensingBlockInput<'a> {
    pub model: &'a SensingModel,
    pub channels: &'a ChannelSet,
    pub targets: &'a [TargetParams],
    pub start: &'a PhaseProfile,
    pub comm: &'a PhaseProfile,
    pub p_sense: f64,
    pub tau_sense: f64,
    pub weight: f64,
    pub lambda_phi: f64,
    pub delta_phi: &'a [f64],
    pub sweeps: usize,
    pub rcg: RcgOptions,
}

#[derive(Clone, Debug)]
pub struct SensingBlockOutcome {
    pub profile: PhaseProfile,
    /// Objective after each layer update, starting with the incoming value.
    pub trace: Vec<f64>,
    pub crb: CrbReport,
}

impl SensingBlockInput<'_> {
    pub fn objective(&self, prof: &PhaseProfile) -> Result<f64, SensingError> {
        let g = cascade(prof, self.channels)?;
        let rep = self.model.crb_total(self.targets, &g, self.p_sense, self.tau_sense);
        let mut v = self.weight * rep.total_approx;
        for (l, d) in reconfig_distance(self.comm, prof)?.iter().enumerate() {
            v += self.lambda_phi * (d - self.delta_phi[l]).max(0.0);
        }
        Ok(v)
    }
}

/// Layer-wise RCG on the sensing profile; every layer update ends with a
/// projection onto the reconfiguration ball around the comm profile and is
/// kept only if the objective does not increase.
pub fn optimize_sensing_block(input: &SensingBlockInput) -> Result<SensingBlockOutcome, SensingError> {
    let mut prof = input.start.clone().with_purpose(Purpose::Sense);
    let mut cur = input.objective(&prof)?;
    let mut trace = vec![cur];
    if input.weight > 0.0 && !input.targets.is_empty() {
        for _ in 0..input.sweeps {
            let before = cur;
            for l in 0..input.channels.layers() {
                let parts = cascade_parts(&prof, input.channels)?;
                let (a, b) = (&parts.a[l], &parts.b[l]);
                let reference = input.comm.phases[l].clone();
                let delta = input.delta_phi[l];
                let mut f = |theta: &[f64]| -> (f64, Vec<f64>) {
                    let phi: Vec<C64> = theta.iter().map(|&t| cis(t)).collect();
                    match input.model.crb_layer_gradient(input.targets, a, b, &phi, input.p_sense, input.tau_sense) {
                        Ok((v, mut g)) => {
                            let (hv, hg) = hinge_reconfig(theta, &reference, input.lambda_phi, delta);
                            for (x, y) in g.iter_mut().zip(hg) {
                                *x = input.weight * *x + y;
                            }
                            (input.weight * v + hv, g)
                        }
                        Err(_) => (f64::INFINITY, vec![0.0; theta.len()]),
                    }
                };
                let out = rcg_minimize(&prof.phases[l], &mut f, input.rcg)?;
                let projected = project_reconfig_ball(&out.theta, &reference, delta);
                let mut cand = prof.clone();
                cand.set_layer(l, &projected);
                let v = input.objective(&cand)?;
                if v <= cur {
                    prof = cand;
                    cur = v;
                }
                trace.push(cur);
            }
            if before - cur <= 1e-9 * before.abs() {
                break;
            }
        }
    }
    let g = cascade(&prof, input.channels)?;
    let crb = input.model.crb_total(input.targets, &g, input.p_sense, input.tau_sense);
    Ok(SensingBlockOutcome { profile: prof, trace, crb })
}

/// Wide-coverage sensing start: best of `draws` random profiles by the
/// min/mean ratio of the illumination pattern over a ±60° grid at mid range.
pub fn max_angular_coverage(
    model: &SensingModel,
    ch: &ChannelSet,
    mid_range: f64,
    draws: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> PhaseProfile {
    use rand::Rng;
    let sizes: Vec<usize> = (0..ch.layers()).map(|l| ch.layer_size(l)).collect();
    let grid: Vec<f64> = (0..25).map(|i| (-60.0 + 5.0 * i as f64).to_radians()).collect();
    let mut best: Option<(f64, PhaseProfile)> = None;
    for _ in 0..draws.max(1) {
        let prof = PhaseProfile::from_phases(
            sizes.iter().map(|&n| (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect()).collect(),
            Purpose::Sense,
        );
        let g = cascade(&prof, ch).expect("consistent dimensions");
        let gains: Vec<f64> = grid.iter().map(|&t| model.illumination_gain(t, mid_range, &g, 1.0)).collect();
        let mean = gains.iter().sum::<f64>() / gains.len() as f64;
        let min = gains.iter().cloned().fold(f64::INFINITY, f64::min);
        let score = if mean > 0.0 { min / mean } else { 0.0 };
        if best.as_ref().map(|(b, _)| score > *b).unwrap_or(true) {
            best = Some((score, prof));
        }
    }
    best.unwrap().1
}

// ---------------------------------------------------------------------------
// Maximum-likelihood grid estimator (verification only)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct ParamGrid {
    pub thetas: Vec<f64>,
    pub ranges: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl ParamGrid {
    pub fn len(&self) -> usize {
        self.thetas.len() * self.ranges.len() * self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `points` values per axis centred on `c` with half-widths `w`.
    pub fn around(c: (f64, f64, f64), w: (f64, f64, f64), points: usize) -> ParamGrid {
        let axis = |c: f64, w: f64| -> Vec<f64> {
            if points <= 1 {
                return vec![c];
            }
            (0..points).map(|i| c - w + 2.0 * w * i as f64 / (points - 1) as f64).collect()
        };
        ParamGrid { thetas: axis(c.0, w.0), ranges: axis(c.1, w.1), velocities: axis(c.2, w.2) }
    }
}

/// Grid argmax of the known-phase likelihood: y = √σ·m(θ,r,v) + noise, with
/// the amplitude profiled out as max(0, Re(mᴴy))/‖m‖².
pub fn ml_estimate(
    model: &SensingModel,
    y: &CMat,
    g: &CMat,
    p_sense: f64,
    known_phase: f64,
    grid: &ParamGrid,
) -> Result<TargetParams, SensingError> {
    if grid.is_empty() {
        return Err(SensingError::EmptyGrid);
    }
    let x = model.probe(p_sense);
    let gx = g * &x;
    let ss = model.snapshots;
    let mut best = (f64::NEG_INFINITY, TargetParams { theta: 0.0, range: 1.0, velocity: 0.0, rcs: 0.0, phase: known_phase });
    let doppler: Vec<Vec<C64>> = grid
        .velocities
        .iter()
        .map(|&v| (0..ss).map(|s| cis(-2.0 * PI * (2.0 * v / model.wavelength()) * s as f64 / ss as f64)).collect())
        .collect();
    let n = y.nrows();
    let (mut z, mut q, mut qz) = (vec![C64::new(0.0, 0.0); ss], vec![C64::new(0.0, 0.0); ss], vec![C64::new(0.0, 0.0); ss]);
    for &th in &grid.thetas {
        for &r in &grid.ranges {
            let a = model.steering(th, r).a;
            for s in 0..ss {
                let (mut zs, mut qs) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
                for i in 0..n {
                    zs += a[i].conj() * y[(i, s)];
                    qs += a[i] * gx[(i, s)];
                }
                z[s] = zs;
                q[s] = qs;
                qz[s] = qs.conj() * zs;
            }
            let amp = (r / model.reference_distance).powf(-model.path_loss_exponent / 2.0);
            let energy = amp * amp * n as f64 * q.iter().map(|x| x.norm_sqr()).sum::<f64>();
            if energy <= 0.0 {
                continue;
            }
            for (&v, dop) in grid.velocities.iter().zip(&doppler) {
                let acc: C64 = qz.iter().zip(dop).map(|(x, d)| x * d).sum();
                let proj = (cis(-known_phase) * acc * amp).re;
                let score = if proj > 0.0 { proj * proj / energy } else { 0.0 };
                if score > best.0 {
                    let a_hat = proj.max(0.0) / energy;
                    best = (score, TargetParams { theta: th, range: r, velocity: v, rcs: a_hat * a_hat, phase: known_phase });
                }
            }
        }
    }
    Ok(best.1)
}

/// Successive estimation of `count` targets, subtracting each fitted echo.
pub fn ml_estimate_many(
    model: &SensingModel,
    y: &CMat,
    g: &CMat,
    p_sense: f64,
    known_phases: &[f64],
    grid: &ParamGrid,
) -> Result<Vec<TargetParams>, SensingError> {
    let mut resid = y.clone();
    let mut out = Vec::new();
    for &ph in known_phases {
        let t = ml_estimate(model, &resid, g, p_sense, ph, grid)?;
        if t.rcs > 0.0 {
            resid -= model.snapshot_mean(&t, g, p_sense);
        }
        out.push(t);
    }
    Ok(out)
}

/// Grid-ML accuracy against the bound at one SNR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlReport {
    pub snr_db: f64,
    pub trials: usize,
    pub crb_exact: f64,
    pub crb_approx: f64,
    pub error_bound: f64,
    /// Mean of (θ̂−θ)² + (r̂−r)² + (v̂−v)².
    pub mse: f64,
}

/// Runs `trials` noisy echoes of `t` at per-sample SNR `snr_db` (echo power
/// over noise power, τ = 1) through [`ml_estimate`] on a grid of
/// `grid_points` per axis spanning ±5 bound standard deviations.
pub fn ml_mse_experiment<R: rand::Rng>(
    model: &SensingModel,
    g: &CMat,
    t: &TargetParams,
    p_sense: f64,
    snr_db: f64,
    trials: usize,
    grid_points: usize,
    rng: &mut R,
) -> Result<MlReport, SensingError> {
    use rand_distr::{Distribution, StandardNormal};
    let mu = model.snapshot_mean(t, g, p_sense);
    let noise = mu.norm_squared() / mu.len() as f64 / 10f64.powf(snr_db / 10.0);
    let m = SensingModel { noise_power: noise, ..model.clone() };
    let j = m.fim(t, g, p_sense, 1.0)?.j;
    let crb = schur_bound(&j).1?;
    let inv = j.try_inverse().ok_or(SensingError::Singular)?;
    let sd: Vec<f64> = (0..3).map(|i| inv[(i, i)].max(0.0).sqrt()).collect();
    let grid = ParamGrid::around((t.theta, t.range, t.velocity), (5.0 * sd[0], 5.0 * sd[1], 5.0 * sd[2]), grid_points);
    let amp = (noise / 2.0).sqrt();
    let mut total = 0.0;
    for _ in 0..trials {
        let y = CMat::from_fn(mu.nrows(), mu.ncols(), |i, s| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            mu[(i, s)] + C64::new(re * amp, im * amp)
        });
        let e = ml_estimate(&m, &y, g, p_sense, t.phase, &grid)?;
        total += (e.theta - t.theta).powi(2) + (e.range - t.range).powi(2) + (e.velocity - t.velocity).powi(2);
    }
    Ok(MlReport {
        snr_db,
        trials,
        crb_exact: crb.crb_exact,
        crb_approx: crb.crb_approx,
        error_bound: crb.error_bound,
        mse: total / trials.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_fim() {
        let (_, r) = schur_bound(&Matrix4::identity());
        let r = r.unwrap();
        assert!((r.crb_exact - 3.0).abs() < 1e-6);
        assert!((r.crb_approx - 3.0).abs() < 1e-6);
    }
}
