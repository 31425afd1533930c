//! SIM cascade transform, phase-profile algebra, quantization, greedy local
//! search and a Riemannian conjugate-gradient solver on the phase torus.

use crate::channel::ChannelSet;
use crate::linalg::{cis, wrap_phase, CMat, CVec, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetasurfaceError {
    #[error("layer {layer}: profile has {got} phases, channel expects {want}")]
    Dimension { layer: usize, got: usize, want: usize },
    #[error("profiles differ in shape")]
    ShapeMismatch,
    #[error("objective became non-finite")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Ce,
    Sense,
    Comm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    /// Per-layer phases in [0, 2π).
    pub phases: Vec<Vec<f64>>,
    pub purpose: Purpose,
    pub quantized: bool,
}

impl PhaseProfile {
    pub fn zeros(sizes: &[usize], purpose: Purpose) -> PhaseProfile {
        PhaseProfile { phases: sizes.iter().map(|&n| vec![0.0; n]).collect(), purpose, quantized: false }
    }

    pub fn from_phases(phases: Vec<Vec<f64>>, purpose: Purpose) -> PhaseProfile {
        let phases = phases.into_iter().map(|l| l.into_iter().map(wrap_phase).collect()).collect();
        PhaseProfile { phases, purpose, quantized: false }
    }

    pub fn layers(&self) -> usize {
        self.phases.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.phases.iter().map(|l| l.len()).collect()
    }

    pub fn layer_coefficients(&self, l: usize) -> Vec<C64> {
        self.phases[l].iter().map(|&t| cis(t)).collect()
    }

    pub fn set_layer(&mut self, l: usize, theta: &[f64]) {
        self.phases[l] = theta.iter().map(|&t| wrap_phase(t)).collect();
        self.quantized = false;
    }

    /// Flattened phases, layer-major.
    pub fn flat(&self) -> Vec<f64> {
        self.phases.iter().flatten().cloned().collect()
    }

    pub fn with_purpose(mut self, purpose: Purpose) -> PhaseProfile {
        self.purpose = purpose;
        self
    }

    /// One line per layer, whitespace-separated phases in full precision.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.phases {
            let row: Vec<String> = l.iter().map(|x| format!("{:e}", x)).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, purpose: Purpose) -> Option<PhaseProfile> {
        let phases = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().map(|t| t.parse::<f64>().ok()).collect::<Option<Vec<f64>>>())
            .collect::<Option<Vec<_>>>()?;
        Some(PhaseProfile { phases, purpose, quantized: false })
    }
}

/// Multiplies row `n` of `m` by `d[n]` in place.
pub fn scale_rows(m: &mut CMat, d: &[C64]) {
    for (n, &s) in d.iter().enumerate() {
        let mut row = m.row_mut(n);
        row *= s;
    }
}

/// Multiplies column `n` of `m` by `d[n]` in place.
pub fn scale_cols(m: &mut CMat, d: &[C64]) {
    for (n, &s) in d.iter().enumerate() {
        let mut col = m.column_mut(n);
        col *= s;
    }
}

fn check_dims(profile: &PhaseProfile, ch: &ChannelSet) -> Result<(), MetasurfaceError> {
    for l in 0..ch.layers() {
        let want = ch.layer_size(l);
        let got = profile.phases.get(l).map(|p| p.len()).unwrap_or(0);
        if got != want || profile.layers() != ch.layers() {
            return Err(MetasurfaceError::Dimension { layer: l, got, want });
        }
    }
    Ok(())
}

/// G = Φ_L H^(L) ⋯ Φ_1 H^(1), N_L×M.
pub fn cascade(profile: &PhaseProfile, ch: &ChannelSet) -> Result<CMat, MetasurfaceError> {
    check_dims(profile, ch)?;
    let mut g = ch.link(0).clone();
    scale_rows(&mut g, &profile.layer_coefficients(0));
    for l in 1..ch.layers() {
        g = ch.link(l) * g;
        scale_rows(&mut g, &profile.layer_coefficients(l));
    }
    Ok(g)
}

/// Split G = B_l·diag(φ_l)·A_l for every layer.
///
/// `a[l]` is the field arriving at layer l (N_l×M), `b[l]` maps layer l's
/// output to the output layer (N_L×N_l, identity for the last layer).
#[derive(Clone, Debug)]
pub struct CascadeParts {
    pub a: Vec<CMat>,
    pub b: Vec<CMat>,
    pub g: CMat,
}

pub fn cascade_parts(profile: &PhaseProfile, ch: &ChannelSet) -> Result<CascadeParts, MetasurfaceError> {
    check_dims(profile, ch)?;
    let l_count = ch.layers();
    let mut a = Vec::with_capacity(l_count);
    a.push(ch.link(0).clone());
    for l in 1..l_count {
        let mut prev = a[l - 1].clone();
        scale_rows(&mut prev, &profile.layer_coefficients(l - 1));
        a.push(ch.link(l) * prev);
    }
    let n_out = ch.layer_size(l_count - 1);
    let mut b = vec![CMat::identity(n_out, n_out); l_count];
    for l in (0..l_count.saturating_sub(1)).rev() {
        let mut m = b[l + 1].clone();
        scale_cols(&mut m, &profile.layer_coefficients(l + 1));
        b[l] = m * ch.link(l + 1);
    }
    let mut g = a[l_count - 1].clone();
    scale_rows(&mut g, &profile.layer_coefficients(l_count - 1));
    Ok(CascadeParts { a, b, g })
}

/// B·diag(φ)·A.
pub fn compose_layer(b: &CMat, phi: &[C64], a: &CMat) -> CMat {
    let mut m = a.clone();
    scale_rows(&mut m, phi);
    b * m
}

/// Nearest grid phase 2πq/2^b under circular distance; exact ties go to the
/// smaller grid value (0 wins a tie across the wrap).
pub fn quantize_phase(theta: f64, bits: u32) -> f64 {
    let levels = 1u64 << bits;
    let step = TAU / levels as f64;
    let x = wrap_phase(theta) / step;
    let lower = x.floor();
    let frac = x - lower;
    let lo = (lower as u64) % levels;
    let hi = (lo + 1) % levels;
    let q = if frac < 0.5 {
        lo
    } else if frac > 0.5 {
        hi
    } else {
        lo.min(hi)
    };
    q as f64 * step
}

pub fn quantize(profile: &PhaseProfile, bits: &[u32]) -> PhaseProfile {
    let phases = profile
        .phases
        .iter()
        .zip(bits)
        .map(|(l, &b)| l.iter().map(|&t| quantize_phase(t, b)).collect())
        .collect();
    PhaseProfile { phases, purpose: profile.purpose, quantized: true }
}

/// Circular distance between two phases, in [0, π].
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    d.min(TAU - d)
}

/// Largest per-element circular distance between a profile and its
/// quantization.
pub fn max_quantization_error(profile: &PhaseProfile, quantized: &PhaseProfile) -> f64 {
    profile
        .flat()
        .iter()
        .zip(quantized.flat())
        .map(|(&a, b)| circular_distance(a, b))
        .fold(0.0, f64::max)
}

/// Σ_n |e^{jθ_a} − e^{jθ_b}|² per layer.
pub fn reconfig_distance(a: &PhaseProfile, b: &PhaseProfile) -> Result<Vec<f64>, MetasurfaceError> {
    if a.sizes() != b.sizes() {
        return Err(MetasurfaceError::ShapeMismatch);
    }
    Ok(a.phases.iter().zip(&b.phases).map(|(x, y)| layer_reconfig_distance(x, y)).collect())
}

pub fn layer_reconfig_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&p, &q)| (cis(p) - cis(q)).norm_sqr()).sum()
}

/// Entrywise projection onto the unit circle; zero maps to 1.
pub fn circle_retract(values: &[C64]) -> Vec<C64> {
    values
        .iter()
        .map(|z| {
            let m = z.norm();
            if m > 0.0 && m.is_finite() {
                z / m
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Discrete refinement
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LocalSearchOutcome {
    pub profile: PhaseProfile,
    pub value: f64,
    pub passes: usize,
    pub evaluations: usize,
}

/// Greedy coordinate descent over the ±1 grid-step neighbourhood (minimizes).
///
/// When `sensitivity` is given, the top 20% of elements by magnitude are
/// visited first, followed by full passes in natural order. Stops after a
/// pass with no improvement or after `max_passes`.
pub fn local_search(
    profile: &PhaseProfile,
    bits: &[u32],
    objective: &mut dyn FnMut(&PhaseProfile) -> f64,
    max_passes: usize,
    sensitivity: Option<&[Vec<f64>]>,
) -> LocalSearchOutcome {
    let mut cur = quantize(profile, bits);
    let mut best = objective(&cur);
    let mut evaluations = 1;
    let all: Vec<(usize, usize)> =
        cur.phases.iter().enumerate().flat_map(|(l, p)| (0..p.len()).map(move |n| (l, n))).collect();
    let mut try_coord = |cur: &mut PhaseProfile, best: &mut f64, evals: &mut usize, l: usize, n: usize| -> bool {
        let step = TAU / (1u64 << bits[l]) as f64;
        let orig = cur.phases[l][n];
        let mut improved = false;
        let mut best_phase = orig;
        for dir in [-1.0, 1.0] {
            let cand = quantize_phase(orig + dir * step, bits[l]);
            if cand == orig {
                continue;
            }
            cur.phases[l][n] = cand;
            let v = objective(cur);
            *evals += 1;
            if v < *best {
                *best = v;
                best_phase = cand;
                improved = true;
            }
        }
        cur.phases[l][n] = best_phase;
        improved
    };
    if let Some(sens) = sensitivity {
        let mut ranked: Vec<(usize, usize, f64)> =
            all.iter().map(|&(l, n)| (l, n, sens.get(l).and_then(|s| s.get(n)).map(|x| x.abs()).unwrap_or(0.0))).collect();
        ranked.sort_by(|a, b| b.2.total_cmp(&a.2));
        let top = (ranked.len() as f64 * 0.2).ceil() as usize;
        for &(l, n, _) in ranked.iter().take(top) {
            try_coord(&mut cur, &mut best, &mut evaluations, l, n);
        }
    }
    let mut passes = 0;
    while passes < max_passes {
        passes += 1;
        let mut any = false;
        for &(l, n) in &all {
            any |= try_coord(&mut cur, &mut best, &mut evaluations, l, n);
        }
        if !any {
            break;
        }
    }
    cur.quantized = true;
    LocalSearchOutcome { profile: cur, value: best, passes, evaluations }
}

// ---------------------------------------------------------------------------
// Riemannian conjugate gradient on the torus of phases
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct RcgOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for RcgOptions {
    fn default() -> Self {
        RcgOptions { max_iter: 50, grad_tol: 1e-10, armijo: 1e-4, backtrack: 0.5, max_backtracks: 40 }
    }
}

#[derive(Clone, Debug)]
pub struct RcgOutcome {
    pub theta: Vec<f64>,
    pub value: f64,
    pub trace: Vec<f64>,
    pub grad: Vec<f64>,
    pub iterations: usize,
}

/// Minimizes `f` over unit-modulus vectors e^{jθ} with Polak-Ribière+
/// directions and Armijo backtracking.
///
/// `f` returns the value and ∂f/∂θ; the phase coordinates make the circle
/// retraction exact (θ + t·d), and the Riemannian gradient in these
/// coordinates is ∂f/∂θ.
pub fn rcg_minimize(
    theta0: &[f64],
    f: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>),
    opts: RcgOptions,
) -> Result<RcgOutcome, MetasurfaceError> {
    let mut theta = theta0.to_vec();
    let (mut val, mut g) = f(&theta);
    if !val.is_finite() {
        return Err(MetasurfaceError::NonFinite);
    }
    let mut trace = vec![val];
    let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        let gnorm2: f64 = g.iter().map(|x| x * x).sum();
        if gnorm2.sqrt() <= opts.grad_tol || theta.is_empty() {
            break;
        }
        let mut slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            d = g.iter().map(|x| -x).collect();
            slope = -gnorm2;
        }
        let dmax = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut t = (PI / (4.0 * dmax)).min(1.0);
        let mut accepted: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        let step = |t: f64| -> Vec<f64> { theta.iter().zip(&d).map(|(a, b)| a + t * b).collect() };
        for _ in 0..opts.max_backtracks {
            let cand = step(t);
            let (v, gc) = f(&cand);
            if v.is_finite() && v <= val + opts.armijo * t * slope {
                accepted = Some((cand, v, gc));
                break;
            }
            t *= opts.backtrack;
        }
        // One quadratic-interpolation probe; kept only if it beats the
        // Armijo point.
        if let Some((_, v_t, _)) = &accepted {
            let curv = v_t - val - slope * t;
            if curv > 0.0 {
                let tq = -slope * t * t / (2.0 * curv);
                if tq > 0.0 && (tq - t).abs() > 1e-3 * t {
                    let cand = step(tq);
                    let (v, gc) = f(&cand);
                    if v.is_finite() && v < *v_t && v <= val + opts.armijo * tq * slope {
                        accepted = Some((cand, v, gc));
                    }
                }
            }
        }
        let Some((cand, v, gc)) = accepted else { break };
        iterations += 1;
        let beta = {
            let num: f64 = gc.iter().zip(&g).map(|(a, b)| a * (a - b)).sum();
            (num / gnorm2).max(0.0)
        };
        d = gc.iter().zip(&d).map(|(a, b)| -a + beta * b).collect();
        theta = cand;
        val = v;
        g = gc;
        trace.push(val);
    }
    let theta = theta.into_iter().map(wrap_phase).collect();
    Ok(RcgOutcome { theta, value: val, trace, grad: g, iterations })
}

/// d/dθ of λ·[Σ_n |e^{jθ_n} − e^{js_n}|² − δ]₊, with the hinge value.
pub fn hinge_reconfig(theta: &[f64], reference: &[f64], lambda: f64, delta: f64) -> (f64, Vec<f64>) {
    let d = layer_reconfig_distance(theta, reference);
    if d <= delta || lambda == 0.0 {
        return (0.0, vec![0.0; theta.len()]);
    }
    let g = theta.iter().zip(reference).map(|(&t, &s)| lambda * 2.0 * (t - s).sin()).collect();
    (lambda * (d - delta), g)
}

/// Phase derivative of Re-linear objectives: if df = 2·Re Σ_n c_n dφ_n with
/// φ_n = e^{jθ_n}, then ∂f/∂θ_n = −2·Im(c_n φ_n).
pub fn phase_gradient(c: &[C64], phi: &[C64]) -> Vec<f64> {
    c.iter().zip(phi).map(|(c, p)| -2.0 * (c * p).im).collect()
}

/// Shrinks the move from `reference` to `theta` (per element, along the
/// shortest arc) by a common factor until the reconfiguration distance is at
/// most `delta`.
pub fn project_reconfig_ball(theta: &[f64], reference: &[f64], delta: f64) -> Vec<f64> {
    if layer_reconfig_distance(theta, reference) <= delta {
        return theta.to_vec();
    }
    let step: Vec<f64> = theta.iter().zip(reference).map(|(&t, &s)| crate::linalg::wrap_signed(t - s)).collect();
    let at = |a: f64| -> Vec<f64> { reference.iter().zip(&step).map(|(&s, &d)| wrap_phase(s + a * d)).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if layer_reconfig_distance(&at(mid), reference) <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

/// Frobenius matching of the cascade to `target` with a reconfiguration hinge
/// towards `sense`, by layer-wise RCG sweeps from `start`.
pub fn beamformer_match(
    target: &CMat,
    ch: &ChannelSet,
    start: &PhaseProfile,
    sense: &PhaseProfile,
    lambda_phi: f64,
    delta_phi: &[f64],
    sweeps: usize,
    opts: RcgOptions,
) -> Result<(PhaseProfile, Vec<f64>), MetasurfaceError> {
    let mut prof = start.clone().with_purpose(Purpose::Comm);
    let total = |p: &PhaseProfile| -> Result<f64, MetasurfaceError> {
        let g = cascade(p, ch)?;
        let mut v = (g - target).norm_squared();
        for (l, d) in reconfig_distance(p, sense)?.iter().enumerate() {
            v += lambda_phi * (d - delta_phi[l]).max(0.0);
        }
        Ok(v)
    };
    let mut trace = vec![total(&prof)?];
    for _ in 0..sweeps {
        for l in 0..ch.layers() {
            let parts = cascade_parts(&prof, ch)?;
            let (a, b) = (&parts.a[l], &parts.b[l]);
            let reference = sense.phases[l].clone();
            let delta = delta_phi[l];
            let mut obj = |theta: &[f64]| -> (f64, Vec<f64>) {
                let phi: Vec<C64> = theta.iter().map(|&t| cis(t)).collect();
                let e = compose_layer(b, &phi, a) - target;
                let ehb = e.adjoint() * b;
                let c: Vec<C64> = (0..phi.len()).map(|n| (a.row(n) * ehb.column(n))[(0, 0)]).collect();
                let mut g = phase_gradient(&c, &phi);
                let (hv, hg) = hinge_reconfig(theta, &reference, lambda_phi, delta);
                for (x, y) in g.iter_mut().zip(hg) {
                    *x += y;
                }
                (e.norm_squared() + hv, g)
            };
            let out = rcg_minimize(&prof.phases[l], &mut obj, opts)?;
            prof.set_layer(l, &out.theta);
        }
        let v = total(&prof)?;
        let prev = *trace.last().unwrap();
        trace.push(v);
        if (prev - v).abs() <= 1e-12 * prev.abs().max(1e-300) {
            break;
        }
    }
    Ok((prof, trace))
}

/// Least-squares fit of a rank-limited target: the cascade at zero phase,
/// projected onto the span of `h` (N_L×K), then retracted to unit modulus
/// per element of the output layer.
pub fn svd_init_target(ch: &ChannelSet, h_users: &CMat) -> CMat {
    let g0 = cascade(&PhaseProfile::zeros(&(0..ch.layers()).map(|l| ch.layer_size(l)).collect::<Vec<_>>(), Purpose::Comm), ch)
        .expect("channel dimensions are consistent");
    if h_users.ncols() == 0 {
        return g0;
    }
    let svd = h_users.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12 * svd.singular_values[0]).count().max(1);
    let ur = u.columns(0, rank).into_owned();
    let proj = &ur * (ur.adjoint() * &g0);
    // Keep the overall energy of the zero-phase cascade.
    let s = (g0.norm() / proj.norm().max(1e-300)).min(1e6);
    proj * C64::from(s)
}

/// Column vector as an N×1 matrix.
pub fn as_column(v: &CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}
