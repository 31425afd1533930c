//! Communication phase: SINR and secrecy, artificial noise, the Bernstein
//! surrogate of the outage constraint, Monte-Carlo outage evaluation and
//! Blocks B, C and E.
//!
//! Received signals are `h_kᴴ·G·t` for every transmitted column `t` of the
//! set `T = [W | Z]` (precoders then AN columns).

use crate::channel::{sample_csi_error, sample_eve_uncertainty, ChannelSet};
use crate::linalg::{null_space_of_columns, CMat, CVec, C64};
use crate::scenario::{derive_stream, stream_index, PurposeTag, ScenarioConfig};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use thiserror::Error;

#[path = "security_blocks.rs"]
mod blocks;
pub use blocks::*;

#[derive(Debug, Error, PartialEq)]
pub enum SecurityError {
    #[error("noise power must be positive, got {0}")]
    BadNoise(f64),
    #[error("outage probability {0} outside (0, 1)")]
    BadProbability(f64),
    #[error("at least {need} samples required, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error(transparent)]
    Metasurface(#[from] crate::metasurface::MetasurfaceError),
}

// ---------------------------------------------------------------------------
// Scalar primitives
// ---------------------------------------------------------------------------

/// |h_kᴴw_k|² / (Σ_{j≠k}|h_kᴴw_j|² + h_kᴴR_AN h_k + σ²) with effective
/// channels `h` (columns) and precoders `w` (columns).
pub fn sinr_user(k: usize, h: &CMat, w: &CMat, r_an: Option<&CMat>, noise: f64) -> Result<f64, SecurityError> {
    if !(noise > 0.0) {
        return Err(SecurityError::BadNoise(noise));
    }
    let hk = h.column(k);
    let sig = hk.dotc(&w.column(k)).norm_sqr();
    let mut den = noise;
    for j in 0..w.ncols() {
        if j != k {
            den += hk.dotc(&w.column(j)).norm_sqr();
        }
    }
    if let Some(r) = r_an {
        den += (hk.adjoint() * r * hk)[(0, 0)].re.max(0.0);
    }
    Ok(sig / den)
}

/// [log2(1+SINR_k) − max_e log2(1+SINR_e)]₊; no eavesdroppers means no
/// subtrahend.
pub fn secrecy_rate(
    k: usize,
    users: &CMat,
    eves: &CMat,
    w: &CMat,
    r_an: Option<&CMat>,
    noise: f64,
) -> Result<f64, SecurityError> {
    let ru = (1.0 + sinr_user(k, users, w, r_an, noise)?).log2();
    let mut re: f64 = 0.0;
    for e in 0..eves.ncols() {
        let mut eve_cols = users.clone();
        eve_cols.set_column(k, &eves.column(e));
        re = re.max((1.0 + sinr_user(k, &eve_cols, w, r_an, noise)?).log2());
    }
    Ok((ru - re).max(0.0))
}

/// Q(x) = P(Z > x) for a standard normal Z.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// δ = Q⁻¹(ε): Acklam's rational approximation to the normal quantile,
/// refined by bisection on Q to 1e−10.
pub fn bernstein_delta(eps_out: f64) -> Result<f64, SecurityError> {
    if !(eps_out > 0.0 && eps_out < 1.0) {
        return Err(SecurityError::BadProbability(eps_out));
    }
    let x0 = -normal_quantile_approx(eps_out);
    let (mut lo, mut hi) = (x0 - 1e-2, x0 + 1e-2);
    while q_function(lo) < eps_out {
        lo -= 1.0;
    }
    while q_function(hi) > eps_out {
        hi += 1.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > eps_out {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d = 0.5 * (lo + hi);
    Ok(if (eps_out - 0.5).abs() < 1e-15 { 0.0 } else { d })
}

fn normal_quantile_approx(p: f64) -> f64 {
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let pl = 0.02425;
    if p < pl {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - pl {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile_approx(1.0 - p)
    }
}

// ---------------------------------------------------------------------------
// Beamformers
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Beamformers {
    /// Unit-modulus analog precoder, M×R_RF.
    pub w_rf: CMat,
    /// Digital precoder, R_RF×K.
    pub w_bb: CMat,
    /// AN columns Z (M×d), R_AN = Z·Zᴴ.
    pub an: CMat,
}

impl Beamformers {
    pub fn w(&self) -> CMat {
        &self.w_rf * &self.w_bb
    }

    pub fn r_an(&self) -> CMat {
        &self.an * self.an.adjoint()
    }

    pub fn an_power(&self) -> f64 {
        self.an.norm_squared()
    }

    pub fn power(&self) -> f64 {
        self.w().norm_squared() + self.an_power()
    }

    /// T = [W | Z].
    pub fn transmit_set(&self) -> CMat {
        let w = self.w();
        let (m, k, d) = (w.nrows(), w.ncols(), self.an.ncols());
        let mut t = CMat::zeros(m, k + d);
        t.columns_mut(0, k).copy_from(&w);
        if d > 0 {
            t.columns_mut(k, d).copy_from(&self.an);
        }
        t
    }

    /// Scales every column by √factor (power scales by `factor`).
    pub fn scaled(&self, factor: f64) -> Beamformers {
        let s = C64::from(factor.max(0.0).sqrt());
        Beamformers { w_rf: self.w_rf.clone(), w_bb: &self.w_bb * s, an: &self.an * s }
    }
}

/// Effective user channels Gᴴh_k as columns (M×K).
pub fn effective_channels(g: &CMat, h: &[CVec]) -> CMat {
    let gh = g.adjoint();
    CMat::from_columns(&h.iter().map(|x| &gh * x).collect::<Vec<_>>())
}

/// Orthonormal basis of the null space of the effective user channels.
pub fn an_basis(g: &CMat, users: &[CVec]) -> CMat {
    null_space_of_columns(&effective_channels(g, users))
}

/// Z = √(p/d)·N.
pub fn an_columns(basis: &CMat, p_an: f64) -> CMat {
    let d = basis.ncols();
    if d == 0 {
        return basis.clone();
    }
    basis * C64::from((p_an.max(0.0) / d as f64).sqrt())
}

// ---------------------------------------------------------------------------
// Design surrogate
// ---------------------------------------------------------------------------

/// Users, CSI error radii and eavesdropper draws used inside the optimizer.
#[derive(Clone, Debug)]
pub struct DesignSet {
    pub users: Vec<CVec>,
    /// ε_k used for the SINR denominator inflation (zero disables it).
    pub eps: Vec<f64>,
    /// `eve_samples[d][e]`: SIM→eavesdropper vector of eve e in draw d.
    pub eve_samples: Vec<Vec<CVec>>,
    pub noise: f64,
    /// Bernstein safety factor δ.
    pub delta: f64,
    pub rate_min: f64,
    pub slack: f64,
    pub gamma_min: f64,
}

impl DesignSet {
    /// Robust design uses δ = Q⁻¹(ε_out), the configured CSI radii and
    /// `design_samples` eavesdropper draws; the nominal design uses δ = 0, no
    /// inflation and the nominal eavesdropper locations only.
    pub fn from_config(config: &ScenarioConfig, ch: &ChannelSet) -> DesignSet {
        let robust = config.robust;
        let spread = config.eve_angle_spread > 0.0 || config.eve_range_spread > 0.0;
        let eve_samples = if robust && spread {
            let mut rng = derive_stream(config, PurposeTag::McOutage, stream_index::DESIGN).rng();
            (0..config.design_samples)
                .map(|_| {
                    ch.eve_locations
                        .iter()
                        .map(|&p| {
                            ch.node_vector(sample_eve_uncertainty(p, config.eve_angle_spread, config.eve_range_spread, &mut rng))
                        })
                        .collect()
                })
                .collect()
        } else {
            vec![ch.sim_to_eve.clone()]
        };
        DesignSet {
            users: ch.sim_to_user.clone(),
            eps: if robust { ch.csi_error_bound.clone() } else { vec![0.0; ch.sim_to_user.len()] },
            eve_samples,
            noise: config.noise_power,
            delta: if robust { bernstein_delta(config.eps_out).unwrap_or(0.0) } else { 0.0 },
            rate_min: config.rate_min,
            slack: config.bernstein_slack,
            gamma_min: config.gamma_min,
        }
    }

    pub fn users(&self) -> usize {
        self.users.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserStats {
    pub sinr: f64,
    pub mean: f64,
    pub std: f64,
    pub surrogate: f64,
    /// mean − δ·std ≥ R_min + Δ.
    pub satisfied: bool,
}

/// Received powers for re-evaluating the surrogate under a common power
/// scaling of every column.
#[derive(Clone, Debug, Default)]
pub struct PowerProfile {
    /// Per user: (signal, interference incl. inflation).
    pub user: Vec<(f64, f64)>,
    /// `[k][d][e]`: (signal, interference) at each eavesdropper draw.
    pub eve: Vec<Vec<Vec<(f64, f64)>>>,
    pub noise: f64,
    pub delta: f64,
    /// R_min + Δ for the outage hinge.
    pub target: f64,
}

impl PowerProfile {
    /// Σ_k (mean − δ·std) with every column power multiplied by `c`.
    pub fn surrogate_at(&self, c: f64) -> f64 {
        self.value_at(c, 0.0, 0.0)
    }

    /// Surrogate minus μ·Σ_k ([log2(1+γ_min) − L_k]₊ + [R_min + Δ − surrogate_k]₊)
    /// at power factor `c`.
    pub fn value_at(&self, c: f64, floor_weight: f64, gamma_min: f64) -> f64 {
        let l_floor = (1.0 + gamma_min).log2();
        let mut total = 0.0;
        for (k, &(s, i)) in self.user.iter().enumerate() {
            let lu = (1.0 + c * s / (c * i + self.noise)).log2();
            if floor_weight > 0.0 {
                total -= floor_weight * (l_floor - lu).max(0.0);
            }
            let raw: Vec<f64> = self.eve[k]
                .iter()
                .map(|d| lu - d.iter().map(|&(s, i)| (1.0 + c * s / (c * i + self.noise)).log2()).fold(0.0, f64::max))
                .collect();
            let rates: Vec<f64> = raw.iter().map(|r| r.max(0.0)).collect();
            let (m, sd) = mean_std(&rates);
            total += m - self.delta * sd;
            if floor_weight > 0.0 {
                let (mu, su) = mean_std(&raw);
                total -= floor_weight * (self.target - (mu - self.delta * su)).max(0.0);
            }
        }
        total
    }
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Objective value, per-user statistics and, on request, the accumulated
/// vectors `acc_t` (N_L) such that ∂f/∂t̄ = Gᴴ·acc_t.
#[derive(Clone, Debug)]
pub struct Analysis {
    /// Σ_k surrogate_k − floor penalty.
    pub value: f64,
    pub surrogate: f64,
    pub floor_penalty: f64,
    pub users: Vec<UserStats>,
    pub power: PowerProfile,
    pub acc: Option<CMat>,
}

/// Evaluates Σ_k (mean_d R_kd − δ·std_d R_kd) minus μ times the SINR-floor and
/// secrecy-target hinges; the
/// latter acts on the unclipped differences L_k − max_e L_e so that a user
/// below its eavesdropper still sees an ascent direction
/// for output-layer fields `y = G·T` (N_L × columns, first K are the users'
/// streams).
pub fn analyze(design: &DesignSet, y: &CMat, floor_weight: f64, want_grad: bool) -> Analysis {
    let k_users = design.users();
    let cols = y.ncols();
    let col_pow: Vec<f64> = (0..cols).map(|t| y.column(t).norm_squared()).collect();
    let total_pow: f64 = col_pow.iter().sum();
    let n_draws = design.eve_samples.len();
    let noise = design.noise;
    let mut acc = if want_grad { Some(CMat::zeros(y.nrows(), cols)) } else { None };
    let mut stats = Vec::with_capacity(k_users);
    let mut power = PowerProfile { user: Vec::new(), eve: Vec::new(), noise, delta: design.delta, target: design.rate_min + design.slack };
    let (mut surrogate, mut floor_penalty) = (0.0, 0.0);
    let l_floor = (1.0 + design.gamma_min).log2();
    // s_{r,t} rows for the users.
    let s_user: Vec<Vec<C64>> = design.users.iter().map(|h| (0..cols).map(|t| h.dotc(&y.column(t))).collect()).collect();
    for k in 0..k_users {
        let sk = s_user[k][k].norm_sqr();
        let eps2 = design.eps[k] * design.eps[k];
        let ik: f64 = (0..cols).filter(|&t| t != k).map(|t| s_user[k][t].norm_sqr()).sum::<f64>()
            + eps2 * (total_pow - col_pow[k]);
        let dk = ik + noise;
        let lu = (1.0 + sk / dk).log2();
        power.user.push((sk, ik));
        // Eavesdropper rates per draw, keeping the active eavesdropper.
        let mut rates = Vec::with_capacity(n_draws);
        let mut raw = Vec::with_capacity(n_draws);
        let mut active = Vec::with_capacity(n_draws);
        let mut eve_pows = Vec::with_capacity(n_draws);
        for draw in &design.eve_samples {
            let mut best = (0.0f64, usize::MAX, 0.0, 0.0);
            let mut pows = Vec::with_capacity(draw.len());
            for (e, he) in draw.iter().enumerate() {
                let se: Vec<C64> = (0..cols).map(|t| he.dotc(&y.column(t))).collect();
                let s = se[k].norm_sqr();
                let i: f64 = (0..cols).filter(|&t| t != k).map(|t| se[t].norm_sqr()).sum();
                pows.push((s, i));
                let le = (1.0 + s / (i + noise)).log2();
                if best.1 == usize::MAX || le > best.0 {
                    best = (le, e, s, i);
                }
            }
            let le = if best.1 == usize::MAX { 0.0 } else { best.0 };
            raw.push(lu - le);
            rates.push((lu - le).max(0.0));
            active.push((best.1, best.2, best.3));
            eve_pows.push(pows);
        }
        power.eve.push(eve_pows);
        let (mean, std) = mean_std(&rates);
        let sur = mean - design.delta * std;
        surrogate += sur;
        let hinge = (l_floor - lu).max(0.0);
        let (raw_mean, raw_std) = mean_std(&raw);
        let short = (design.rate_min + design.slack - (raw_mean - design.delta * raw_std)).max(0.0);
        floor_penalty += floor_weight * (hinge + short);
        stats.push(UserStats {
            sinr: sk / dk,
            mean,
            std,
            surrogate: sur,
            satisfied: sur >= design.rate_min + design.slack,
        });
        if let Some(acc) = acc.as_mut() {
            let n = rates.len() as f64;
            let coef: Vec<f64> = rates
                .iter()
                .map(|&r| {
                    if r <= 0.0 {
                        0.0
                    } else if std > 0.0 && n > 1.0 {
                        1.0 / n - design.delta * (r - mean) / ((n - 1.0) * std)
                    } else {
                        1.0 / n
                    }
                })
                .zip(&raw)
                .map(|(c, &r)| {
                    if short <= 0.0 {
                        c
                    } else if raw_std > 0.0 && n > 1.0 {
                        c + floor_weight * (1.0 / n - design.delta * (r - raw_mean) / ((n - 1.0) * raw_std))
                    } else {
                        c + floor_weight / n
                    }
                })
                .collect();
            let mut c_user: f64 = coef.iter().sum();
            if hinge > 0.0 {
                c_user += floor_weight;
            }
            // User k: dL/dS and dL/dD.
            let ds = c_user / (LN_2 * (dk + sk));
            let dd = -c_user * sk / (LN_2 * dk * (dk + sk));
            let hk = &design.users[k];
            for t in 0..cols {
                let w = if t == k { ds } else { dd };
                let mut col = acc.column_mut(t);
                col.axpy(s_user[k][t] * w, hk, C64::from(1.0));
                if t != k && eps2 > 0.0 {
                    col.axpy(C64::from(dd * eps2), &y.column(t), C64::from(1.0));
                }
            }
            for (d, &(e, s, i)) in active.iter().enumerate() {
                if coef[d] == 0.0 || e == usize::MAX {
                    continue;
                }
                let de = i + noise;
                let ws = -coef[d] / (LN_2 * (de + s));
                let wd = coef[d] * s / (LN_2 * de * (de + s));
                let he = &design.eve_samples[d][e];
                for t in 0..cols {
                    let st = he.dotc(&y.column(t));
                    let w = if t == k { ws } else { wd };
                    acc.column_mut(t).axpy(st * w, he, C64::from(1.0));
                }
            }
        }
    }
    Analysis { value: surrogate - floor_penalty, surrogate, floor_penalty, users: stats, power, acc }
}

// ---------------------------------------------------------------------------
// Monte-Carlo evaluation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SecrecyReport {
    pub sinr_user: Vec<f64>,
    /// Worst nominal eavesdropper SINR per user stream.
    pub sinr_eve: Vec<f64>,
    /// Nominal secrecy rates.
    pub secrecy: Vec<f64>,
    pub sum_secrecy: f64,
    /// Mean secrecy over Monte-Carlo draws, per user.
    pub mc_mean_secrecy: Vec<f64>,
    pub mc_sum_secrecy: f64,
    pub outage: Vec<f64>,
    pub bernstein: Vec<UserStats>,
}

fn rate_terms(h: &CVec, y: &CMat, k: usize, noise: f64) -> f64 {
    let cols = y.ncols();
    let s = h.dotc(&y.column(k)).norm_sqr();
    let i: f64 = (0..cols).filter(|&t| t != k).map(|t| h.dotc(&y.column(t)).norm_sqr()).sum();
    s / (i + noise)
}

/// Empirical outage fraction P(R_k^sec < R_min) over `samples` joint draws
/// of eavesdropper locations and bounded user CSI errors, plus nominal
/// metrics and the mean secrecy over the draws.
pub fn evaluate_secrecy(
    config: &ScenarioConfig,
    ch: &ChannelSet,
    design: &DesignSet,
    g: &CMat,
    t: &CMat,
    samples: usize,
    stream_index: u64,
) -> SecrecyReport {
    let y = g * t;
    let k_users = ch.sim_to_user.len();
    let noise = config.noise_power;
    let mut rep = SecrecyReport::default();
    for k in 0..k_users {
        let su = rate_terms(&ch.sim_to_user[k], &y, k, noise);
        let se = ch.sim_to_eve.iter().map(|he| rate_terms(he, &y, k, noise)).fold(0.0, f64::max);
        rep.sinr_user.push(su);
        rep.sinr_eve.push(se);
        rep.secrecy.push(((1.0 + su).log2() - (1.0 + se).log2()).max(0.0));
    }
    rep.sum_secrecy = rep.secrecy.iter().sum();
    let mut rng = derive_stream(config, PurposeTag::McOutage, stream_index).rng();
    let mut fails = vec![0usize; k_users];
    let mut sums = vec![0.0; k_users];
    for _ in 0..samples {
        let eves: Vec<CVec> = ch
            .eve_locations
            .iter()
            .map(|&p| ch.node_vector(sample_eve_uncertainty(p, config.eve_angle_spread, config.eve_range_spread, &mut rng)))
            .collect();
        for k in 0..k_users {
            let err = sample_csi_error(ch.sim_to_user[k].len(), ch.csi_error_bound[k], &mut rng);
            let h = &ch.sim_to_user[k] + err;
            let su = rate_terms(&h, &y, k, noise);
            let se = eves.iter().map(|he| rate_terms(he, &y, k, noise)).fold(0.0, f64::max);
            let r = ((1.0 + su).log2() - (1.0 + se).log2()).max(0.0);
            sums[k] += r;
            if r < config.rate_min {
                fails[k] += 1;
            }
        }
    }
    let n = samples.max(1) as f64;
    rep.outage = fails.iter().map(|&f| f as f64 / n).collect();
    rep.mc_mean_secrecy = sums.iter().map(|s| s / n).collect();
    rep.mc_sum_secrecy = rep.mc_mean_secrecy.iter().sum();
    rep.bernstein = analyze(design, &y, 0.0, false).users;
    rep
}
