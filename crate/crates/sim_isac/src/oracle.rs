//! Independent reference implementations for tests: exhaustive discrete
//! search, Richardson-extrapolated finite differences and a toy SDR solver.
//!
//! Nothing here calls into the optimizers it checks.

use crate::linalg::{CMat, CVec, C64};
use crate::metasurface::{PhaseProfile, Purpose};
use nalgebra::SymmetricEigen;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("search space of {0} configurations exceeds 2^20")]
    BudgetExceeded(u128),
    #[error("non-finite function value at {0}")]
    NonFinite(f64),
}

/// Enumerates every discrete profile (lexicographic order, first element
/// most significant) and returns the minimizer; ties keep the
/// lexicographically smallest profile.
pub fn exhaustive_phase_search(
    sizes: &[usize],
    bits: &[u32],
    objective: &mut dyn FnMut(&PhaseProfile) -> f64,
) -> Result<(PhaseProfile, f64), OracleError> {
    let mut radices = Vec::new();
    for (l, &n) in sizes.iter().enumerate() {
        for _ in 0..n {
            radices.push((l, 1u64 << bits[l]));
        }
    }
    let total: u128 = radices.iter().map(|&(_, r)| r as u128).product();
    if total > 1 << 20 {
        return Err(OracleError::BudgetExceeded(total));
    }
    let mut digits = vec![0u64; radices.len()];
    let mut best: Option<(Vec<u64>, f64)> = None;
    let build = |digits: &[u64]| {
        let mut phases: Vec<Vec<f64>> = sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
        for (d, &(l, r)) in digits.iter().zip(&radices) {
            phases[l].push(TAU * *d as f64 / r as f64);
        }
        PhaseProfile { phases, purpose: Purpose::Comm, quantized: true }
    };
    for _ in 0..total {
        let v = objective(&build(&digits));
        if best.as_ref().map(|(_, b)| v < *b).unwrap_or(true) {
            best = Some((digits.clone(), v));
        }
        // Increment, last digit fastest.
        for i in (0..digits.len()).rev() {
            digits[i] += 1;
            if digits[i] < radices[i].1 {
                break;
            }
            digits[i] = 0;
        }
    }
    let (d, v) = best.expect("at least one configuration");
    Ok((build(&d), v))
}

#[derive(Clone, Debug)]
pub struct FdEstimate {
    pub value: Vec<f64>,
    pub error: f64,
    /// Observed convergence order of the raw central differences.
    pub order: f64,
}

/// Central differences at h, h/2, h/4 with two Richardson levels, for a
/// vector-valued function of one real variable. Base h = 1e−4·(1+|x|)
/// unless `h` is given.
pub fn finite_difference_vec(f: &dyn Fn(f64) -> Vec<f64>, x: f64, h: Option<f64>) -> Result<FdEstimate, OracleError> {
    let h0 = h.unwrap_or(1e-4 * (1.0 + x.abs()));
    let central = |h: f64| -> Result<Vec<f64>, OracleError> {
        let (a, b) = (f(x + h), f(x - h));
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite(x));
        }
        Ok(a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect())
    };
    let d1 = central(h0)?;
    let d2 = central(h0 / 2.0)?;
    let d3 = central(h0 / 4.0)?;
    let r1: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect();
    let r2: Vec<f64> = d2.iter().zip(&d3).map(|(a, b)| (4.0 * b - a) / 3.0).collect();
    let value: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| (16.0 * b - a) / 15.0).collect();
    let error = value.iter().zip(&r2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let e12: f64 = d1.iter().zip(&d2).map(|(a, b)| (a - b).abs()).sum();
    let e23: f64 = d2.iter().zip(&d3).map(|(a, b)| (a - b).abs()).sum();
    let order = if e23 > 0.0 && e12 > 0.0 { (e12 / e23).log2() } else { f64::INFINITY };
    Ok(FdEstimate { value, error, order })
}

pub fn finite_difference(f: &dyn Fn(f64) -> f64, x: f64, h: Option<f64>) -> Result<(f64, f64), OracleError> {
    let e = finite_difference_vec(&|t| vec![f(t)], x, h)?;
    Ok((e.value[0], e.error))
}

/// Gradient of a scalar function of several variables, coordinate by
/// coordinate.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: Option<f64>) -> Result<Vec<f64>, OracleError> {
    (0..x.len())
        .map(|i| {
            let g = |t: f64| {
                let mut y = x.to_vec();
                y[i] = t;
                f(&y)
            };
            finite_difference(&g, x[i], h).map(|(v, _)| v)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Toy semidefinite relaxation for single-stream secrecy beamforming
// ---------------------------------------------------------------------------

/// Toy Block B problem: users and eavesdroppers with effective channels
/// (columns of length M), common noise and a sum-power budget. Beamformers
/// only, no artificial noise.
#[derive(Clone, Debug)]
pub struct SdrProblem {
    pub users: Vec<CVec>,
    pub eves: Vec<CVec>,
    pub noise: f64,
    pub power: f64,
}

#[derive(Clone, Debug)]
pub struct SdrOutcome {
    /// Relaxed objective at the lifted stationary point.
    pub relaxed_value: f64,
    /// Best randomized rank-1 objective.
    pub value: f64,
    pub beamformers: Vec<CVec>,
    /// Top-eigenvalue share of each lifted matrix.
    pub rank_one_share: Vec<f64>,
    pub candidates_feasible: bool,
    pub converged: bool,
}

fn quad(w: &CMat, h: &CVec) -> f64 {
    (h.adjoint() * w * h)[(0, 0)].re
}

/// Σ_k [log2(1+SINR_k) − max_e log2(1+SINR_e,k)]₊ evaluated on lifted
/// covariances W_k.
pub fn sdr_objective(p: &SdrProblem, w: &[CMat]) -> f64 {
    let mut total = 0.0;
    for k in 0..p.users.len() {
        let sig = quad(&w[k], &p.users[k]);
        let int: f64 = (0..w.len()).filter(|&j| j != k).map(|j| quad(&w[j], &p.users[k])).sum();
        let ru = (1.0 + sig / (int + p.noise)).log2();
        let re = p
            .eves
            .iter()
            .map(|he| {
                let s = quad(&w[k], he);
                let i: f64 = (0..w.len()).filter(|&j| j != k).map(|j| quad(&w[j], he)).sum();
                (1.0 + s / (i + p.noise)).log2()
            })
            .fold(0.0, f64::max);
        total += (ru - re).max(0.0);
    }
    total
}

fn project_psd_budget(w: &mut [CMat], power: f64) {
    for m in w.iter_mut() {
        let herm = (&*m + m.adjoint()) * C64::from(0.5);
        let eig = SymmetricEigen::new(herm);
        let vals = eig.eigenvalues.map(|x| C64::from(x.max(0.0)));
        *m = &eig.eigenvectors * CMat::from_diagonal(&vals) * eig.eigenvectors.adjoint();
    }
    let tr: f64 = w.iter().map(|m| m.trace().re).sum();
    if tr > power {
        for m in w.iter_mut() {
            *m *= C64::from(power / tr);
        }
    }
}

/// Projected ascent over PSD matrices on the relaxed problem (gradients by
/// finite differences of the smooth relaxed objective along Hermitian basis
/// directions), then 100 Gaussian-randomized rank-1 candidates.
pub fn sdr_toy(p: &SdrProblem, rng: &mut ChaCha8Rng) -> SdrOutcome {
    let m = p.users[0].len();
    let k = p.users.len();
    let mut w: Vec<CMat> = p
        .users
        .iter()
        .map(|h| {
            let u = h / C64::from(h.norm().max(1e-300));
            &u * u.adjoint() * C64::from(p.power / k as f64)
        })
        .collect();
    // Hermitian basis: real-symmetric and imaginary-antisymmetric units.
    let mut basis = Vec::new();
    for i in 0..m {
        for j in i..m {
            let mut b = CMat::zeros(m, m);
            b[(i, j)] = C64::new(1.0, 0.0);
            b[(j, i)] = C64::new(1.0, 0.0);
            basis.push(b);
            if i != j {
                let mut c = CMat::zeros(m, m);
                c[(i, j)] = C64::new(0.0, 1.0);
                c[(j, i)] = C64::new(0.0, -1.0);
                basis.push(c);
            }
        }
    }
    let mut val = sdr_objective(p, &w);
    let mut step = 0.1 * p.power;
    let mut converged = false;
    for _ in 0..10_000 {
        let h = 1e-7 * p.power;
        let mut grad: Vec<CMat> = vec![CMat::zeros(m, m); k];
        for kk in 0..k {
            for b in &basis {
                let mut wp = w.clone();
                wp[kk] += b * C64::from(h);
                let mut wm = w.clone();
                wm[kk] -= b * C64::from(h);
                let d = (sdr_objective(p, &wp) - sdr_objective(p, &wm)) / (2.0 * h);
                grad[kk] += b * C64::from(d);
            }
        }
        let gn: f64 = grad.iter().map(|g| g.norm()).sum::<f64>().max(1e-300);
        let mut improved = false;
        while step > 1e-12 * p.power {
            let mut cand: Vec<CMat> = w.iter().zip(&grad).map(|(a, g)| a + g * C64::from(step / gn)).collect();
            project_psd_budget(&mut cand, p.power);
            let v = sdr_objective(p, &cand);
            if v > val + 1e-12 * val.abs().max(1e-12) {
                w = cand;
                val = v;
                improved = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            converged = true;
            break;
        }
    }
    let rank_one_share = w
        .iter()
        .map(|m| {
            let e = SymmetricEigen::new((m + m.adjoint()) * C64::from(0.5));
            let top = e.eigenvalues.iter().cloned().fold(0.0, f64::max);
            top / m.trace().re.max(1e-300)
        })
        .collect();
    // Randomization: w_k = W_k^{1/2}·z, rescaled to the power budget.
    let roots: Vec<CMat> = w
        .iter()
        .map(|m| {
            let e = SymmetricEigen::new((m + m.adjoint()) * C64::from(0.5));
            let s = e.eigenvalues.map(|x| C64::from(x.max(0.0).sqrt()));
            &e.eigenvectors * CMat::from_diagonal(&s) * e.eigenvectors.adjoint()
        })
        .collect();
    let mut best: Option<(f64, Vec<CVec>)> = None;
    let mut feasible = true;
    for draw in 0..100 {
        let cands: Vec<CVec> = if draw == 0 {
            // Principal eigenvectors as the first candidate.
            w.iter()
                .map(|m| {
                    let e = SymmetricEigen::new((m + m.adjoint()) * C64::from(0.5));
                    let i = e.eigenvalues.imax();
                    e.eigenvectors.column(i).into_owned() * C64::from(e.eigenvalues[i].max(0.0).sqrt())
                })
                .collect()
        } else {
            roots
                .iter()
                .map(|r| {
                    let z = CVec::from_fn(m, |_, _| {
                        let a: f64 = StandardNormal.sample(rng);
                        let b: f64 = StandardNormal.sample(rng);
                        C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
                    });
                    r * z
                })
                .collect()
        };
        let pw: f64 = cands.iter().map(|c| c.norm_squared()).sum();
        let scale = if pw > 0.0 { (p.power / pw).sqrt() } else { 0.0 };
        let cands: Vec<CVec> = cands.into_iter().map(|c| c * C64::from(scale)).collect();
        let pw: f64 = cands.iter().map(|c| c.norm_squared()).sum();
        feasible &= pw <= p.power * (1.0 + 1e-9);
        let lifted: Vec<CMat> = cands.iter().map(|c| c * c.adjoint()).collect();
        let v = sdr_objective(p, &lifted);
        if best.as_ref().map(|(b, _)| v > *b).unwrap_or(true) {
            best = Some((v, cands));
        }
    }
    let (value, beamformers) = best.unwrap();
    SdrOutcome { relaxed_value: val, value, beamformers, rank_one_share, candidates_feasible: feasible, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_polynomial() {
        let (d, _) = finite_difference(&|x| x * x, 3.0, None).unwrap();
        assert!((d - 6.0).abs() < 1e-8);
    }

    #[test]
    fn exhaustive_counts_and_ties() {
        let mut calls = 0;
        let mut f = |_: &PhaseProfile| {
            calls += 1;
            1.0
        };
        let (p, v) = exhaustive_phase_search(&[2], &[1], &mut f).unwrap();
        assert_eq!(calls, 4);
        assert_eq!(v, 1.0);
        assert_eq!(p.phases, vec![vec![0.0, 0.0]]);
        assert!(exhaustive_phase_search(&[21], &[1], &mut |_| 0.0).is_err());
    }
}
