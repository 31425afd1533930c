//! The figure sweeps. Each returns the tables it produces; the caller writes
//! them. Sweep points run on the current rayon pool and are collected in
//! point order, so output does not depend on the pool size.

use crate::table::Table;
use rayon::prelude::*;
use sim_isac::baselines::{prepare, run_scheme, BaselineError, Metrics, Scheme};
use sim_isac::lbcd::{Benchmarks, LbcdError, LbcdOptions};
use sim_isac::scenario::{dbm_to_watt, ScenarioConfig};
use sim_isac::sensing::SensingError;
use sim_isac::channel::ChannelError;
use thiserror::Error;

#[path = "scenarios_multi.rs"]
mod multi;
pub use multi::*;

pub const SCENARIOS: [&str; 9] = [
    "power_sweep",
    "alpha_sweep",
    "uncertainty_sweep",
    "layer_sweep",
    "quantization_sweep",
    "convergence_trace",
    "time_allocation_sweep",
    "eve_sweep",
    "crb_error_report",
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Lbcd(#[from] LbcdError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Runs a named scenario with its default sweep grid.
pub fn run_named(name: &str, c: &ScenarioConfig) -> Result<Vec<Table>, RunError> {
    match name {
        "power_sweep" => power_sweep(c, &(20..=34).step_by(2).map(|d| d as f64).collect::<Vec<_>>()),
        "alpha_sweep" => alpha_sweep(c, &(0..=10).map(|i| i as f64 / 10.0).collect::<Vec<_>>()),
        "uncertainty_sweep" => uncertainty_sweep(c, &[0.0, 0.5, 1.0, 2.0, 4.0], 4),
        "layer_sweep" => layer_sweep(c, &[1, 2, 3, 4], 5),
        "quantization_sweep" => quantization_sweep(c, &[1, 2, 3, 4, 5, 6], 4),
        "convergence_trace" => convergence_trace(c),
        "time_allocation_sweep" => time_allocation_sweep(c, &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
        "eve_sweep" => eve_sweep(c, &[1, 2, 3, 4], 8),
        "crb_error_report" => crb_error_report(c, &[0.0, 10.0, 20.0, 30.0], 200),
        other => Err(RunError::UnknownScenario(other.to_string())),
    }
}

/// Seeds of a multi-seed sweep: the master seed and its successors.
pub fn seed_list(c: &ScenarioConfig, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| c.master_seed.wrapping_add(i)).collect()
}

fn options(c: &ScenarioConfig) -> LbcdOptions {
    LbcdOptions::from_config(c)
}

fn benchmarks(c: &ScenarioConfig) -> Result<Benchmarks, RunError> {
    Ok(prepare(c)?.benchmarks)
}

fn run(s: Scheme, c: &ScenarioConfig, b: Benchmarks) -> Result<Metrics, RunError> {
    Ok(run_scheme(s, c, Some(b), &options(c))?.metrics)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Every scheme against transmit power in dBm.
pub fn power_sweep(c: &ScenarioConfig, dbm: &[f64]) -> Result<Vec<Table>, RunError> {
    let configs: Vec<ScenarioConfig> = dbm.iter().map(|&d| ScenarioConfig { p_bs_max: dbm_to_watt(d), ..c.clone() }).collect();
    let benches: Vec<Benchmarks> = configs.par_iter().map(benchmarks).collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, Scheme)> = (0..dbm.len()).flat_map(|i| Scheme::ALL.map(|s| (i, s))).collect();
    let out: Vec<Metrics> = jobs.par_iter().map(|&(i, s)| run(s, &configs[i], benches[i])).collect::<Result<_, _>>()?;
    let mut t = Table::new(
        "power_sweep.csv",
        &["p_dbm", "scheme", "utility", "sum_secrecy", "inv_norm_crb", "max_outage", "design_satisfied"],
    );
    for (&(i, s), m) in jobs.iter().zip(&out) {
        t.push(vec![
            dbm[i].into(),
            s.label().into(),
            m.utility.into(),
            m.sum_secrecy.into(),
            m.inv_norm_crb.into(),
            m.max_outage.into(),
            m.design_satisfied.into(),
        ]);
    }
    Ok(vec![t])
}

/// τ_comm·Σ secrecy: the slot-averaged secrecy rate the utility trades.
pub fn slot_secrecy(m: &Metrics) -> f64 {
    m.resources.tau_comm * m.sum_secrecy
}

/// U(α) of a finished run: (1−α)·τ_comm·Σsecrecy/R_max − α·CRB/CRB_min.
pub fn utility_at(alpha: f64, m: &Metrics, b: &Benchmarks) -> f64 {
    (1.0 - alpha) * slot_secrecy(m) / b.r_max - alpha * m.crb_total / b.crb_min
}

/// One L-BCD run per α; each α then takes the best of all runs under its own
/// utility. U(α) is linear in α over this common pool, so the selected
/// secrecy and CRB are both non-increasing in α. Returns the selected
/// metrics (utility rescored) and the index of the run each came from.
pub fn pooled_alpha_runs(c: &ScenarioConfig, alphas: &[f64]) -> Result<Vec<(Metrics, usize)>, RunError> {
    let b = benchmarks(c)?;
    let runs: Vec<Metrics> =
        alphas.par_iter().map(|&a| run(Scheme::Lbcd, &ScenarioConfig { alpha: a, ..c.clone() }, b)).collect::<Result<_, _>>()?;
    Ok(alphas
        .iter()
        .map(|&a| {
            let mut best = 0;
            for (i, m) in runs.iter().enumerate() {
                if utility_at(a, m, &b) > utility_at(a, &runs[best], &b) {
                    best = i;
                }
            }
            let mut m = runs[best].clone();
            m.utility = utility_at(a, &m, &b);
            (m, best)
        })
        .collect())
}

/// Pareto front of L-BCD over the weight α.
pub fn alpha_sweep(c: &ScenarioConfig, alphas: &[f64]) -> Result<Vec<Table>, RunError> {
    let runs = pooled_alpha_runs(c, alphas)?;
    let mut t = Table::new("alpha_sweep.csv", &["alpha", "sum_secrecy", "inv_norm_crb", "utility"]);
    for (&a, (m, _)) in alphas.iter().zip(&runs) {
        t.push(vec![a.into(), slot_secrecy(m).into(), m.inv_norm_crb.into(), m.utility.into()]);
    }
    Ok(vec![t])
}

/// Resource split chosen by L-BCD over α.
pub fn time_allocation_sweep(c: &ScenarioConfig, alphas: &[f64]) -> Result<Vec<Table>, RunError> {
    let runs = pooled_alpha_runs(c, alphas)?;
    let mut t = Table::new(
        "time_allocation_sweep.csv",
        &["alpha", "source_alpha", "tau_ce", "tau_sense", "tau_comm", "p_sense", "p_comm", "crb_total", "sum_secrecy"],
    );
    for (&a, (m, src)) in alphas.iter().zip(&runs) {
        let r = &m.resources;
        t.push(vec![
            a.into(),
            alphas[*src].into(),
            r.tau_ce.into(),
            r.tau_sense.into(),
            r.tau_comm.into(),
            r.p_sense.into(),
            r.p_comm.into(),
            m.crb_total.into(),
            m.sum_secrecy.into(),
        ]);
    }
    Ok(vec![t])
}

/// Robust against non-robust L-BCD as the eavesdropper location spread
/// grows (`scales` multiply the configured spreads).
pub fn uncertainty_sweep(c: &ScenarioConfig, scales: &[f64], seeds: usize) -> Result<Vec<Table>, RunError> {
    let seeds = seed_list(c, seeds);
    let jobs: Vec<(usize, u64, Scheme)> = (0..scales.len())
        .flat_map(|i| seeds.iter().flat_map(move |&s| [Scheme::Lbcd, Scheme::NonRobust].map(|k| (i, s, k))))
        .collect();
    let out: Vec<Metrics> = jobs
        .par_iter()
        .map(|&(i, seed, k)| {
            let cc = ScenarioConfig {
                eve_angle_spread: c.eve_angle_spread * scales[i],
                eve_range_spread: c.eve_range_spread * scales[i],
                master_seed: seed,
                ..c.clone()
            };
            run(k, &cc, benchmarks(&cc)?)
        })
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(
        "uncertainty_sweep.csv",
        &["spread_scale", "angle_spread_deg", "range_spread_m", "scheme", "seeds", "sum_secrecy", "mean_outage", "max_outage"],
    );
    for (i, &s) in scales.iter().enumerate() {
        for k in [Scheme::Lbcd, Scheme::NonRobust] {
            let ms: Vec<&Metrics> = jobs.iter().zip(&out).filter(|(j, _)| j.0 == i && j.2 == k).map(|(_, m)| m).collect();
            let sec: Vec<f64> = ms.iter().map(|m| m.sum_secrecy).collect();
            let outage: Vec<f64> = ms.iter().map(|m| mean(&m.outage)).collect();
            let worst = ms.iter().map(|m| m.max_outage).fold(0.0, f64::max);
            t.push(vec![
                s.into(),
                (c.eve_angle_spread * s).to_degrees().into(),
                (c.eve_range_spread * s).into(),
                k.label().into(),
                ms.len().into(),
                mean(&sec).into(),
                mean(&outage).into(),
                worst.into(),
            ]);
        }
    }
    Ok(vec![t])
}

/// Per-iteration record of one L-BCD run (wall time is left out so the
/// file is reproducible).
pub fn convergence_trace(c: &ScenarioConfig) -> Result<Vec<Table>, RunError> {
    let r = run_scheme(Scheme::Lbcd, c, None, &options(c))?;
    let mut t = Table::new(
        "convergence_trace.csv",
        &[
            "iteration",
            "f_aug",
            "secrecy_term",
            "sensing_term",
            "penalty_term",
            "delta_f",
            "delta_theta",
            "outage_gap",
            "crb_gap",
            "lambda_phi",
            "converged",
        ],
    );
    for rec in &r.trace {
        let b = &rec.breakdown;
        t.push(vec![
            rec.iteration.into(),
            b.f_aug.into(),
            b.secrecy_term.into(),
            b.sensing_term.into(),
            b.penalty_term.into(),
            rec.delta_f.into(),
            rec.delta_theta.into(),
            rec.outage_gap.into(),
            rec.crb_gap.into(),
            rec.lambda_phi.into(),
            r.converged_at.is_some_and(|it| it <= rec.iteration).into(),
        ]);
    }
    Ok(vec![t])
}
