// Blocks B, C and E, hybrid factorization and the log-det rate benchmark.

use super::*;
use crate::linalg::{cis, singular_values, wrap_phase};
use crate::metasurface::{
    cascade, cascade_parts, compose_layer, hinge_reconfig, phase_gradient, project_reconfig_ball, rcg_minimize,
    reconfig_distance, PhaseProfile, Purpose, RcgOptions,
};
use rand::Rng;
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Hybrid factorization and initialization
// ---------------------------------------------------------------------------

fn unit_phase(z: C64, old: C64) -> C64 {
    if z.norm() > 1e-300 {
        z / z.norm()
    } else {
        old
    }
}

fn pinv(m: &CMat) -> CMat {
    m.clone().pseudo_inverse(1e-12).unwrap_or_else(|_| CMat::zeros(m.ncols(), m.nrows()))
}

/// W_opt ≈ W_RF·W_BB with unit-modulus W_RF (M×R) by alternating a phase
/// projection and least squares; the result keeps ‖W_opt‖_F.
pub fn hybrid_factorize(w_opt: &CMat, rf_chains: usize, iterations: usize) -> (CMat, CMat) {
    let (m, k) = (w_opt.nrows(), w_opt.ncols());
    let r = rf_chains.max(1);
    let mut w_rf = CMat::from_fn(m, r, |i, j| {
        if j < k {
            unit_phase(w_opt[(i, j)], C64::from(1.0))
        } else {
            cis(-2.0 * PI * (i * (j - k + 1)) as f64 / m as f64)
        }
    });
    let mut w_bb = pinv(&w_rf) * w_opt;
    let mut best = (f64::INFINITY, w_rf.clone(), w_bb.clone());
    for _ in 0..iterations {
        let err = (w_opt - &w_rf * &w_bb).norm();
        if err < best.0 {
            best = (err, w_rf.clone(), w_bb.clone());
        }
        if err <= 1e-12 * w_opt.norm() {
            break;
        }
        let target = w_opt * w_bb.adjoint();
        w_rf = CMat::from_fn(m, r, |i, j| unit_phase(target[(i, j)], w_rf[(i, j)]));
        w_bb = pinv(&w_rf) * w_opt;
    }
    let err = (w_opt - &w_rf * &w_bb).norm();
    if err < best.0 {
        best = (err, w_rf, w_bb);
    }
    let (_, w_rf, mut w_bb) = best;
    let got = (&w_rf * &w_bb).norm();
    if got > 0.0 {
        w_bb *= C64::from(w_opt.norm() / got);
    }
    (w_rf, w_bb)
}

/// Matched-filter start: unit directions along Gᴴh_k sharing P·(1−share)
/// equally, AN with the remaining share when a null space exists.
pub fn mrt_init(design: &DesignSet, g: &CMat, p_comm: f64, rf_chains: usize) -> Beamformers {
    let eff = effective_channels(g, &design.users);
    let basis = an_basis(g, &design.users);
    let p_an = if basis.ncols() > 0 { 0.1 * p_comm } else { 0.0 };
    let k = eff.ncols().max(1);
    let mut w = eff.clone();
    for mut c in w.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= C64::from(n);
        }
    }
    w *= C64::from(((p_comm - p_an) / k as f64).sqrt());
    let (w_rf, w_bb) = hybrid_factorize(&w, rf_chains, 50);
    Beamformers { w_rf, w_bb, an: an_columns(&basis, p_an) }
}

// ---------------------------------------------------------------------------
// Block B
// ---------------------------------------------------------------------------

pub struct BeamformingInput<'a> {
    pub design: &'a DesignSet,
    /// Cascade G of the comm profile.
    pub g: &'a CMat,
    pub start: &'a Beamformers,
    pub p_comm: f64,
    pub rf_chains: usize,
    /// Weight μ of the SINR-floor hinge.
    pub floor_weight: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct BeamformingOutcome {
    pub beamformers: Beamformers,
    /// Surrogate-minus-floor value of the digital iterates (non-decreasing).
    pub trace: Vec<f64>,
    /// Value after hybrid factorization.
    pub value: f64,
    pub digital_value: f64,
    /// Every user meets its SINR floor.
    pub floor_feasible: bool,
    pub analysis: Analysis,
}

fn stack(w: &CMat, an: &CMat) -> CMat {
    let (m, k, d) = (w.nrows(), w.ncols(), an.ncols());
    let mut t = CMat::zeros(m, k + d);
    t.columns_mut(0, k).copy_from(w);
    if d > 0 {
        t.columns_mut(k, d).copy_from(an);
    }
    t
}

/// Radial projection onto ‖W‖² + s² ≤ P.
fn project_power(w: &mut CMat, s: &mut f64, p: f64) {
    *s = s.max(0.0);
    let tot = w.norm_squared() + *s * *s;
    if tot > p && tot > 0.0 {
        let f = (p / tot).sqrt();
        *w *= C64::from(f);
        *s *= f;
    }
}

/// First-order ascent on the Bernstein surrogate over the fully digital
/// precoders and the AN amplitude √p_AN, projected on the power ball, then
/// hybrid factorization. AN is isotropic in the null space of Gᴴh_k.
pub fn optimize_beamforming_block(input: &BeamformingInput) -> BeamformingOutcome {
    let design = input.design;
    let g = input.g;
    let p = input.p_comm.max(0.0);
    let basis = an_basis(g, &design.users);
    let d = basis.ncols();
    let an_of = |s: f64| an_columns(&basis, s * s);
    let eval = |w: &CMat, s: f64, grad: bool| analyze(design, &(g * stack(w, &an_of(s))), input.floor_weight, grad);
    let mut w = input.start.w();
    let mut s = if d > 0 { input.start.an_power().sqrt() } else { 0.0 };
    project_power(&mut w, &mut s, p);
    let mut cur = eval(&w, s, true);
    let mut trace = vec![cur.value];
    let k = w.ncols();
    let mut step_norm = 0.3 * p.sqrt();
    for _ in 0..input.iterations {
        if p == 0.0 {
            break;
        }
        // Gradient at a tiny AN level when AN is off, to let it switch on.
        let probe;
        let acc_src = if d > 0 && s <= 1e-9 * p.sqrt() {
            probe = eval(&w, 1e-6 * p.sqrt(), true);
            probe.acc.as_ref()
        } else {
            cur.acc.as_ref()
        };
        let Some(acc) = acc_src else { break };
        // Real gradient: df = Re⟨gw, dW⟩ + gs·ds.
        let mut gw = g.adjoint() * acc.columns(0, k) * C64::from(2.0);
        let mut gs = if d > 0 {
            let gz = g.adjoint() * acc.columns(k, d);
            2.0 * (0..d).map(|c| gz.column(c).dotc(&basis.column(c)).re).sum::<f64>() / (d as f64).sqrt()
        } else {
            0.0
        };
        // On the saturated power sphere only the tangential part moves.
        let used = w.norm_squared() + s * s;
        if used >= p * (1.0 - 1e-9) {
            let radial = ((w.iter().zip(gw.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>()) + s * gs) / used;
            if radial > 0.0 {
                gw -= &w * C64::from(radial);
                gs -= radial * s;
            }
        }
        let gnorm = (gw.norm_squared() + gs * gs).sqrt();
        if !(gnorm > 0.0) {
            break;
        }
        let mut accepted = None;
        let mut t = step_norm / gnorm;
        for _ in 0..40 {
            let mut wc = &w + &gw * C64::from(t);
            let mut sc = s + t * gs;
            project_power(&mut wc, &mut sc, p);
            let a = eval(&wc, sc, true);
            if a.value > cur.value {
                accepted = Some((wc, sc, a));
                break;
            }
            t *= 0.5;
        }
        let Some((wc, sc, a)) = accepted else { break };
        let gain = a.value - cur.value;
        step_norm = (2.0 * t * gnorm).min(p.sqrt());
        w = wc;
        s = sc;
        cur = a;
        trace.push(cur.value);
        if gain <= 1e-12 * cur.value.abs().max(1e-12) {
            break;
        }
    }
    let digital_value = cur.value;
    let (w_rf, w_bb) = hybrid_factorize(&w, input.rf_chains, 50);
    let bf = Beamformers { w_rf, w_bb, an: an_of(s) };
    let analysis = analyze(design, &(g * bf.transmit_set()), input.floor_weight, false);
    let floor_feasible = analysis.users.iter().all(|u| u.sinr >= design.gamma_min * (1.0 - 1e-9));
    BeamformingOutcome { value: analysis.value, beamformers: bf, trace, digital_value, floor_feasible, analysis }
}

// ---------------------------------------------------------------------------
// Block C
// ---------------------------------------------------------------------------

pub struct CommSimInput<'a> {
    pub design: &'a DesignSet,
    pub channels: &'a ChannelSet,
    pub beamformers: &'a Beamformers,
    pub start: &'a PhaseProfile,
    pub sense: &'a PhaseProfile,
    /// Scale of the surrogate term (e.g. (1−α)·τ_comm/R_max).
    pub weight: f64,
    pub floor_weight: f64,
    pub lambda_phi: f64,
    pub delta_phi: &'a [f64],
    pub sweeps: usize,
    pub rcg: RcgOptions,
}

#[derive(Clone, Debug)]
pub struct CommSimOutcome {
    pub profile: PhaseProfile,
    /// Minimized objective −weight·(surrogate − floor) + hinge after each
    /// layer update, starting with the incoming value.
    pub trace: Vec<f64>,
    pub analysis: Analysis,
}

impl CommSimInput<'_> {
    pub fn objective(&self, prof: &PhaseProfile) -> Result<f64, SecurityError> {
        let g = cascade(prof, self.channels)?;
        let a = analyze(self.design, &(g * self.beamformers.transmit_set()), self.floor_weight, false);
        let mut v = -self.weight * a.value;
        for (l, d) in reconfig_distance(self.sense, prof)?.iter().enumerate() {
            v += self.lambda_phi * (d - self.delta_phi[l]).max(0.0);
        }
        Ok(v)
    }
}

/// Layer-wise RCG on the comm profile with the beamformers fixed; each layer
/// update is projected onto the reconfiguration ball around the sensing
/// profile and kept only if the objective does not increase.
pub fn optimize_comm_sim_block(input: &CommSimInput) -> Result<CommSimOutcome, SecurityError> {
    let mut prof = input.start.clone().with_purpose(Purpose::Comm);
    let t = input.beamformers.transmit_set();
    let mut cur = input.objective(&prof)?;
    let mut trace = vec![cur];
    if input.weight > 0.0 {
        for _ in 0..input.sweeps {
            let before = cur;
            for l in 0..input.channels.layers() {
                let parts = cascade_parts(&prof, input.channels)?;
                let at = &parts.a[l] * &t;
                let b = &parts.b[l];
                let reference = input.sense.phases[l].clone();
                let delta = input.delta_phi[l];
                let mut f = |theta: &[f64]| -> (f64, Vec<f64>) {
                    let phi: Vec<C64> = theta.iter().map(|&x| cis(x)).collect();
                    let mut y = at.clone();
                    crate::metasurface::scale_rows(&mut y, &phi);
                    let y = b * y;
                    let an = analyze(input.design, &y, input.floor_weight, true);
                    let acc = an.acc.expect("gradient requested");
                    let bacc = b.adjoint() * acc;
                    let c: Vec<C64> = (0..phi.len())
                        .map(|n| (0..t.ncols()).map(|j| bacc[(n, j)].conj() * at[(n, j)]).sum())
                        .collect();
                    let (hv, hg) = hinge_reconfig(theta, &reference, input.lambda_phi, delta);
                    let grad = phase_gradient(&c, &phi).iter().zip(hg).map(|(gv, h)| -input.weight * gv + h).collect();
                    (-input.weight * an.value + hv, grad)
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
    let analysis = analyze(input.design, &(g * t), input.floor_weight, false);
    Ok(CommSimOutcome { profile: prof, trace, analysis })
}

// ---------------------------------------------------------------------------
// Block E
// ---------------------------------------------------------------------------

/// Training design: a base profile and, per configuration q, an additive
/// phase offset on the output layer (offset 0 is all zeros).
#[derive(Clone, Debug, PartialEq)]
pub struct CeDesign {
    pub base: PhaseProfile,
    pub offsets: Vec<Vec<f64>>,
}

impl CeDesign {
    /// Base profile with DFT-ramp offsets 2πqn/Q.
    pub fn ramp(base: &PhaseProfile, q_count: usize) -> CeDesign {
        let n_out = base.phases.last().map(|p| p.len()).unwrap_or(0);
        let offsets = (0..q_count)
            .map(|q| (0..n_out).map(|n| wrap_phase(2.0 * PI * (q * n) as f64 / q_count as f64)).collect())
            .collect();
        CeDesign { base: base.clone().with_purpose(Purpose::Ce), offsets }
    }

    pub fn configurations(&self) -> usize {
        self.offsets.len()
    }

    pub fn configuration(&self, q: usize) -> PhaseProfile {
        let mut p = self.base.clone();
        let last = p.layers() - 1;
        let shifted: Vec<f64> = p.phases[last].iter().zip(&self.offsets[q]).map(|(x, o)| wrap_phase(x + o)).collect();
        p.set_layer(last, &shifted);
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeReport {
    /// Number of training configurations Q.
    pub configurations: usize,
    pub sigma_min: f64,
    /// Modeled worst-user CSI error bound σ/(√(τ_ce·T_slot)·σ_min).
    pub eps_max: f64,
    /// The stacked training map has full column rank.
    pub fully_determined: bool,
    /// eps_max within the configured CSI error radius of the weakest user.
    pub meets_target: bool,
}

/// Q = max(1, ⌈N_L/M⌉).
pub fn ce_configurations(n_out: usize, m: usize) -> usize {
    n_out.div_ceil(m.max(1)).max(1)
}

/// Stacked [G_1ᴴ; …; G_Qᴴ] over the training configurations.
pub fn training_map(design: &CeDesign, ch: &ChannelSet) -> Result<CMat, SecurityError> {
    let m = ch.bs_antennas();
    let n_out = ch.layer_size(ch.layers() - 1);
    let q_count = design.configurations();
    let mut s = CMat::zeros(q_count * m, n_out);
    for q in 0..q_count {
        let g = cascade(&design.configuration(q), ch)?;
        s.rows_mut(q * m, m).copy_from(&g.adjoint());
    }
    Ok(s)
}

/// σ_min of the stacked training map counting all N_L columns (zero when the
/// map has fewer rows than columns).
pub fn training_sigma_min(s: &CMat) -> f64 {
    if s.nrows() < s.ncols() {
        return 0.0;
    }
    singular_values(s).last().cloned().unwrap_or(0.0)
}

pub fn ce_error_model(noise: f64, tau_ce: f64, slot: f64, sigma_min: f64) -> f64 {
    if !(sigma_min > 0.0) || !(tau_ce > 0.0) {
        return f64::INFINITY;
    }
    noise.sqrt() / ((tau_ce * slot).sqrt() * sigma_min)
}

#[derive(Clone, Copy, Debug)]
pub struct CeSearch {
    pub candidates: usize,
    /// Coordinate refinement only runs up to this many free phases.
    pub coordinate_limit: usize,
}

impl Default for CeSearch {
    fn default() -> Self {
        CeSearch { candidates: 64, coordinate_limit: 64 }
    }
}

/// Maximizes σ_min of the training map over the base profile and the
/// configuration offsets: random candidates plus the current design, then
/// coordinate steps of decreasing size.
pub fn optimize_ce_block(
    config: &ScenarioConfig,
    ch: &ChannelSet,
    current: &CeDesign,
    tau_ce: f64,
    search: CeSearch,
) -> Result<(CeDesign, CeReport), SecurityError> {
    let score = |d: &CeDesign| -> Result<f64, SecurityError> { Ok(training_sigma_min(&training_map(d, ch)?)) };
    let mut best = current.clone();
    let mut best_v = score(&best)?;
    let mut rng = derive_stream(config, PurposeTag::Randomization, stream_index::CE_SEARCH).rng();
    let sizes = best.base.sizes();
    let n_out = *sizes.last().unwrap_or(&0);
    let q_count = best.configurations();
    for _ in 0..search.candidates {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect() };
        let base = PhaseProfile::from_phases(sizes.iter().map(|&n| draw(n)).collect(), Purpose::Ce);
        let offsets = (0..q_count).map(|q| if q == 0 { vec![0.0; n_out] } else { draw(n_out) }).collect();
        let cand = CeDesign { base, offsets };
        let v = score(&cand)?;
        if v > best_v {
            best = cand;
            best_v = v;
        }
    }
    let free = sizes.iter().sum::<usize>() + (q_count - 1) * n_out;
    if free <= search.coordinate_limit {
        // Coordinates: (layer, element) of the base, then (q ≥ 1, element).
        let mut coords: Vec<(bool, usize, usize)> = Vec::new();
        for (l, &n) in sizes.iter().enumerate() {
            coords.extend((0..n).map(|i| (false, l, i)));
        }
        for q in 1..q_count {
            coords.extend((0..n_out).map(|i| (true, q, i)));
        }
        for k in 1..=8 {
            let step = PI / f64::from(1u32 << k);
            let mut improved = true;
            while improved {
                improved = false;
                for &(is_offset, a, i) in &coords {
                    for sgn in [1.0, -1.0] {
                        let mut cand = best.clone();
                        let slot = if is_offset { &mut cand.offsets[a][i] } else { &mut cand.base.phases[a][i] };
                        *slot = wrap_phase(*slot + sgn * step);
                        let v = score(&cand)?;
                        if v > best_v * (1.0 + 1e-12) {
                            best = cand;
                            best_v = v;
                            improved = true;
                        }
                    }
                }
            }
        }
    }
    let report = ce_report(config, ch, &best, tau_ce)?;
    Ok((best, report))
}

pub fn ce_report(config: &ScenarioConfig, ch: &ChannelSet, design: &CeDesign, tau_ce: f64) -> Result<CeReport, SecurityError> {
    let s = training_map(design, ch)?;
    let sv = singular_values(&s);
    let smin = training_sigma_min(&s);
    let smax = sv.first().cloned().unwrap_or(0.0);
    let eps_max = ce_error_model(config.noise_power, tau_ce, config.slot_duration, smin);
    let target = ch
        .sim_to_user
        .iter()
        .map(|h| config.csi_error_bound * h.norm())
        .fold(f64::INFINITY, f64::min);
    Ok(CeReport {
        configurations: design.configurations(),
        sigma_min: smin,
        eps_max,
        fully_determined: smin > 1e-10 * smax && smax > 0.0,
        meets_target: eps_max <= target,
    })
}

// ---------------------------------------------------------------------------
// Rate benchmark
// ---------------------------------------------------------------------------

/// log₂det(I_K + (P/σ²)·H·Hᴴ) with H = rows h_kᴴG.
pub fn capacity_logdet(g: &CMat, users: &[CVec], power: f64, noise: f64) -> f64 {
    let h = effective_channels(g, users).adjoint();
    let k = h.nrows();
    let m = CMat::identity(k, k) + &h * h.adjoint() * C64::from(power / noise);
    let eig = nalgebra::SymmetricEigen::new(m).eigenvalues;
    eig.iter().map(|&e| e.max(1e-300).log2()).sum()
}

/// Value and phase gradient of [`capacity_logdet`] with respect to layer `l`
/// for G = B·diag(φ)·A.
pub fn capacity_layer_gradient(a: &CMat, b: &CMat, phi: &[C64], users: &[CVec], power: f64, noise: f64) -> (f64, Vec<f64>) {
    let c = power / noise;
    let g = compose_layer(b, phi, a);
    let hu = CMat::from_rows(&users.iter().map(|h| h.adjoint()).collect::<Vec<_>>());
    let h = &hu * &g;
    let k = h.nrows();
    let m = CMat::identity(k, k) + &h * h.adjoint() * C64::from(c);
    let value: f64 = nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.iter().map(|&e| e.max(1e-300).log2()).sum();
    let psi = m.try_inverse().unwrap_or_else(|| CMat::identity(k, k));
    let x = a * h.adjoint();
    let y = psi * &hu * b;
    let coef: Vec<C64> = (0..phi.len())
        .map(|n| (0..k).map(|j| x[(n, j)] * y[(j, n)]).sum::<C64>() * (c / LN_2))
        .collect();
    (value, phase_gradient(&coef, phi))
}

/// Best-found comm profile for the rate benchmark: layer-wise RCG on the
/// log-det from `start` with a fixed sweep budget.
pub fn maximize_capacity(
    ch: &ChannelSet,
    start: &PhaseProfile,
    power: f64,
    noise: f64,
    sweeps: usize,
    rcg: RcgOptions,
) -> Result<(f64, PhaseProfile), SecurityError> {
    let mut prof = start.clone().with_purpose(Purpose::Comm);
    let mut value = capacity_logdet(&cascade(&prof, ch)?, &ch.sim_to_user, power, noise);
    for _ in 0..sweeps {
        let before = value;
        for l in 0..ch.layers() {
            let parts = cascade_parts(&prof, ch)?;
            let mut f = |theta: &[f64]| -> (f64, Vec<f64>) {
                let phi: Vec<C64> = theta.iter().map(|&x| cis(x)).collect();
                let (v, g) = capacity_layer_gradient(&parts.a[l], &parts.b[l], &phi, &ch.sim_to_user, power, noise);
                (-v, g.into_iter().map(|x| -x).collect())
            };
            let out = rcg_minimize(&prof.phases[l], &mut f, rcg)?;
            if -out.value >= value {
                prof.set_layer(l, &out.theta);
                value = -out.value;
            }
        }
        if value - before <= 1e-9 * value.abs() {
            break;
        }
    }
    Ok((value, prof))
}
