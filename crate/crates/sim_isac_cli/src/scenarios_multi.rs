// Sweeps that pool several seeds, and the CRB accuracy report.

use super::*;
use sim_isac::baselines::evaluate;
use sim_isac::channel::realize;
use sim_isac::lbcd::{coverage_profile, discretize, run_lbcd, Problem};
use sim_isac::metasurface::{cascade, PhaseProfile};
use sim_isac::scenario::{derive_stream, PurposeTag};
use sim_isac::sensing::{ml_mse_experiment, targets_from, SensingModel};
use std::f64::consts::PI;

/// L-BCD on `layers` layers of N_1 elements against SL-RIS with the same
/// total, paired per seed; both are scored against the multi-layer
/// benchmarks.
pub fn layer_sweep(c: &ScenarioConfig, layers: &[usize], seeds: usize) -> Result<Vec<Table>, RunError> {
    let n = c.elements_per_layer.first().copied().unwrap_or(16);
    let jobs: Vec<(u64, usize)> = seed_list(c, seeds).into_iter().flat_map(|s| layers.iter().map(move |&l| (s, l))).collect();
    let out: Vec<(Metrics, Metrics)> = jobs
        .par_iter()
        .map(|&(seed, l)| {
            let cc = ScenarioConfig { master_seed: seed, ..c.with_layers(l, n) };
            let b = benchmarks(&cc)?;
            Ok::<_, RunError>((run(Scheme::Lbcd, &cc, b)?, run(Scheme::SingleLayerRis, &cc, b)?))
        })
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(
        "layer_sweep.csv",
        &[
            "seed",
            "layers",
            "elements",
            "lbcd_utility",
            "sl_ris_utility",
            "gain",
            "lbcd_sum_secrecy",
            "sl_ris_sum_secrecy",
            "lbcd_inv_norm_crb",
            "sl_ris_inv_norm_crb",
        ],
    );
    for (&(seed, l), (m, s)) in jobs.iter().zip(&out) {
        t.push(vec![
            seed.into(),
            l.into(),
            (l * n).into(),
            m.utility.into(),
            s.utility.into(),
            (m.utility - s.utility).into(),
            m.sum_secrecy.into(),
            s.sum_secrecy.into(),
            m.inv_norm_crb.into(),
            s.inv_norm_crb.into(),
        ]);
    }
    Ok(vec![t])
}

/// Largest |wrapped difference| between two profiles of equal shape.
pub fn max_phase_error(a: &PhaseProfile, b: &PhaseProfile) -> f64 {
    a.phases
        .iter()
        .flatten()
        .zip(b.phases.iter().flatten())
        .map(|(x, y)| {
            let d = (x - y).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d)
        })
        .fold(0.0, f64::max)
}

/// One quantization outcome of a continuous solution.
#[derive(Clone, Debug)]
pub struct QuantPoint {
    pub seed: u64,
    pub bits: u32,
    pub continuous: f64,
    pub quantized: f64,
    pub phase_error: f64,
}

/// Solves each seed once with continuous phases, then quantizes that
/// solution to every bit width (beamformers refit, no element search).
pub fn quantization_points(c: &ScenarioConfig, bits: &[u32], seeds: usize) -> Result<Vec<QuantPoint>, RunError> {
    let per_seed: Vec<Vec<QuantPoint>> = seed_list(c, seeds)
        .par_iter()
        .map(|&seed| {
            let cc = ScenarioConfig { master_seed: seed, ..c.clone() };
            let p = prepare(&cc)?;
            let mut o = options(&cc);
            let r = run_lbcd(&p, &o)?;
            let cont = r.state;
            let u_c = evaluate(&p, &cont, &p.benchmarks)?.utility;
            o.local_search_passes = 0;
            bits.iter()
                .map(|&b| {
                    let cb = cc.with_phase_bits(b);
                    let pb = Problem::with_benchmarks(&cb, &p.channels, &p.targets, p.benchmarks);
                    let (q, _) = discretize(&pb, &cont, &o)?;
                    let u_q = evaluate(&pb, &q, &p.benchmarks)?.utility;
                    let err = max_phase_error(&cont.comm, &q.comm).max(max_phase_error(&cont.sense, &q.sense));
                    Ok(QuantPoint { seed, bits: b, continuous: u_c, quantized: u_q, phase_error: err })
                })
                .collect::<Result<Vec<_>, RunError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Relative utility loss (Ū_c − Ū_q)/|Ū_c| of seed-averaged utilities.
pub fn relative_loss(points: &[QuantPoint], bits: u32) -> f64 {
    let sel: Vec<&QuantPoint> = points.iter().filter(|q| q.bits == bits).collect();
    let uc = mean(&sel.iter().map(|q| q.continuous).collect::<Vec<_>>());
    let uq = mean(&sel.iter().map(|q| q.quantized).collect::<Vec<_>>());
    if uc == 0.0 {
        0.0
    } else {
        (uc - uq) / uc.abs()
    }
}

pub fn quantization_sweep(c: &ScenarioConfig, bits: &[u32], seeds: usize) -> Result<Vec<Table>, RunError> {
    let pts = quantization_points(c, bits, seeds)?;
    let mut summary = Table::new(
        "quantization_sweep.csv",
        &["bits", "utility_continuous", "utility_quantized", "relative_loss", "max_phase_error", "error_bound"],
    );
    for &b in bits {
        let sel: Vec<&QuantPoint> = pts.iter().filter(|q| q.bits == b).collect();
        summary.push(vec![
            b.into(),
            mean(&sel.iter().map(|q| q.continuous).collect::<Vec<_>>()).into(),
            mean(&sel.iter().map(|q| q.quantized).collect::<Vec<_>>()).into(),
            relative_loss(&pts, b).into(),
            sel.iter().map(|q| q.phase_error).fold(0.0, f64::max).into(),
            (PI / 2f64.powi(b as i32)).into(),
        ]);
    }
    let mut runs = Table::new("quantization_runs.csv", &["seed", "bits", "utility_continuous", "utility_quantized", "max_phase_error"]);
    for q in &pts {
        runs.push(vec![q.seed.into(), q.bits.into(), q.continuous.into(), q.quantized.into(), q.phase_error.into()]);
    }
    Ok(vec![summary, runs])
}

/// Monte-Carlo outage of robust and non-robust L-BCD per eavesdropper count.
/// Conditional columns pool the instances whose robust design meets every
/// user's secrecy target on its own draws; `_all` columns pool every
/// instance.
pub fn eve_sweep(c: &ScenarioConfig, eves: &[usize], seeds: usize) -> Result<Vec<Table>, RunError> {
    let seeds = seed_list(c, seeds);
    let jobs: Vec<(usize, u64)> = eves.iter().flat_map(|&e| seeds.iter().map(move |&s| (e, s))).collect();
    let out: Vec<(Metrics, Metrics)> = jobs
        .par_iter()
        .map(|&(e, seed)| {
            let cc = ScenarioConfig { eavesdroppers: e, master_seed: seed, ..c.clone() };
            let b = benchmarks(&cc)?;
            Ok::<_, RunError>((run(Scheme::Lbcd, &cc, b)?, run(Scheme::NonRobust, &cc, b)?))
        })
        .collect::<Result<_, _>>()?;
    let mut summary = Table::new(
        "eve_sweep.csv",
        &["eavesdroppers", "instances", "feasible", "robust_outage", "nr_outage", "robust_outage_all", "nr_outage_all"],
    );
    let mut runs = Table::new(
        "eve_sweep_runs.csv",
        &["eavesdroppers", "seed", "scheme", "mean_outage", "max_outage", "design_satisfied", "sum_secrecy"],
    );
    for &e in eves {
        let sel: Vec<&(Metrics, Metrics)> = jobs.iter().zip(&out).filter(|(j, _)| j.0 == e).map(|(_, m)| m).collect();
        let ok: Vec<&(Metrics, Metrics)> = sel.iter().copied().filter(|(r, _)| r.design_satisfied).collect();
        let avg = |v: &[&(Metrics, Metrics)], robust: bool| {
            mean(&v.iter().map(|(r, n)| mean(if robust { &r.outage } else { &n.outage })).collect::<Vec<_>>())
        };
        summary.push(vec![
            e.into(),
            sel.len().into(),
            ok.len().into(),
            avg(&ok, true).into(),
            avg(&ok, false).into(),
            avg(&sel, true).into(),
            avg(&sel, false).into(),
        ]);
    }
    for (&(e, seed), (r, n)) in jobs.iter().zip(&out) {
        for (k, m) in [(Scheme::Lbcd, r), (Scheme::NonRobust, n)] {
            runs.push(vec![
                e.into(),
                seed.into(),
                k.label().into(),
                mean(&m.outage).into(),
                m.max_outage.into(),
                m.design_satisfied.into(),
                m.sum_secrecy.into(),
            ]);
        }
    }
    Ok(vec![summary, runs])
}

/// Grid points per axis of the ML estimator in the CRB report.
pub const ML_GRID_POINTS: usize = 41;

/// Grid-ML mean squared error against the exact and approximate CRB per
/// target and SNR, through the max-angular-coverage sensing profile.
pub fn crb_error_report(c: &ScenarioConfig, snrs: &[f64], trials: usize) -> Result<Vec<Table>, RunError> {
    let (geom, ch) = realize(c)?;
    let targets = targets_from(c, &geom);
    let model = SensingModel::new(c, &ch);
    let g = cascade(&coverage_profile(c, &ch, &model), &ch).map_err(LbcdError::from)?;
    let jobs: Vec<(usize, usize)> = (0..targets.len()).flat_map(|t| (0..snrs.len()).map(move |s| (t, s))).collect();
    let stream = derive_stream(c, PurposeTag::Noise, 0);
    let out: Vec<_> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(t, s))| {
            let mut rng = stream.child(i as u64).rng();
            ml_mse_experiment(&model, &g, &targets[t], c.p_bs_max, snrs[s], trials, ML_GRID_POINTS, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let mut table = Table::new(
        "crb_error_report.csv",
        &["target", "snr_db", "trials", "crb_exact", "crb_approx", "approx_error_bound", "ml_mse", "mse_over_crb"],
    );
    for (&(t, _), r) in jobs.iter().zip(&out) {
        table.push(vec![
            t.into(),
            r.snr_db.into(),
            r.trials.into(),
            r.crb_exact.into(),
            r.crb_approx.into(),
            r.error_bound.into(),
            r.mse.into(),
            (r.mse / r.crb_exact).into(),
        ]);
    }
    Ok(vec![table])
}
