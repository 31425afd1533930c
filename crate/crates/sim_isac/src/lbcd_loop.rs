// The E→D→A→B→C loop, convergence assessment and final discretization.

use super::*;
use crate::metasurface::{local_search, quantize};
use crate::scenario::Tolerances;
use crate::security::{
    ce_report, optimize_beamforming_block, optimize_ce_block, optimize_comm_sim_block, BeamformingInput, CeSearch,
    CommSimInput,
};
use std::time::Instant;

#[derive(Clone, Copy, Debug)]
pub struct LbcdOptions {
    pub max_iterations: usize,
    /// RCG iterations per layer in Blocks A and C.
    pub rcg_iterations: usize,
    pub layer_sweeps: usize,
    pub bf_iterations: usize,
    pub ce_search: CeSearch,
    /// Passes of the final greedy refinement (0 quantizes only).
    pub local_search_passes: usize,
}

impl LbcdOptions {
    pub fn from_config(c: &ScenarioConfig) -> LbcdOptions {
        LbcdOptions {
            max_iterations: c.max_iterations,
            rcg_iterations: 30,
            layer_sweeps: 1,
            bf_iterations: 30,
            ce_search: CeSearch::default(),
            local_search_passes: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub breakdown: ObjectiveBreakdown,
    pub delta_f: f64,
    /// ‖e^{jΘ⁺} − e^{jΘ}‖_F / √N over the sensing and comm profiles.
    pub delta_theta: f64,
    /// max_k design outage − ε_out.
    pub outage_gap: f64,
    /// (CRB_total − Γ_max)/Γ_max.
    pub crb_gap: f64,
    pub lambda_phi: f64,
    /// Accepted flags for blocks E, D, A, B, C.
    pub accepted: [bool; 5],
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStatus {
    pub converged: bool,
    pub objective: bool,
    pub outage: bool,
    pub crb: bool,
    pub parameters: bool,
    /// First failing criterion.
    pub reason: Option<String>,
}

/// All four criteria on the last record: |Δf| ≤ ε_obj·max(1, |f|),
/// outage gap ≤ ε_outage, CRB gap ≤ ε_crb, ‖ΔΘ‖ ≤ ε_param.
pub fn convergence_check(trace: &[IterationRecord], tol: &Tolerances) -> ConvergenceStatus {
    let Some(last) = trace.last() else {
        return ConvergenceStatus {
            converged: false,
            objective: false,
            outage: false,
            crb: false,
            parameters: false,
            reason: Some("empty trace".into()),
        };
    };
    let objective = last.delta_f.abs() <= tol.eps_obj * last.breakdown.f_aug.abs().max(1.0);
    let outage = last.outage_gap <= tol.eps_outage;
    let crb = last.crb_gap <= tol.eps_crb;
    let parameters = last.delta_theta <= tol.eps_param;
    let reason = [(objective, "objective"), (outage, "outage"), (crb, "crb"), (parameters, "parameters")]
        .iter()
        .find(|(ok, _)| !ok)
        .map(|(_, r)| r.to_string());
    ConvergenceStatus { converged: reason.is_none(), objective, outage, crb, parameters, reason }
}

#[derive(Clone, Debug)]
pub struct LbcdResult {
    pub initial: SolverState,
    /// Continuous-phase state at exit.
    pub state: SolverState,
    pub breakdown: ObjectiveBreakdown,
    /// Quantized and locally refined state.
    pub quantized: SolverState,
    pub quantized_breakdown: ObjectiveBreakdown,
    pub trace: Vec<IterationRecord>,
    pub status: ConvergenceStatus,
    /// Iteration (1-based) at which all criteria first held.
    pub converged_at: Option<usize>,
}

fn phase_change(a: &SolverState, b: &SolverState) -> f64 {
    let mut num = 0.0;
    let mut n = 0usize;
    for (x, y) in [(&a.sense, &b.sense), (&a.comm, &b.comm)] {
        for (p, q) in x.phases.iter().zip(&y.phases) {
            num += crate::metasurface::layer_reconfig_distance(p, q);
            n += p.len();
        }
    }
    (num / n.max(1) as f64).sqrt()
}

fn block_err<E: std::fmt::Display>(iteration: usize, block: &'static str) -> impl Fn(E) -> LbcdError {
    move |e| LbcdError::Block { iteration, block, message: e.to_string() }
}

/// Algorithm 1 on a prepared problem.
pub fn run_lbcd(p: &Problem, opts: &LbcdOptions) -> Result<LbcdResult, LbcdError> {
    let c = &p.config;
    let initial = initial_state(p)?;
    let mut st = initial.clone();
    let mut cur = augmented_objective(p, &st)?;
    let rcg = RcgOptions { max_iter: opts.rcg_iterations, ..RcgOptions::default() };
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut converged_at = None;
    let mut status = convergence_check(&trace, &c.tolerances);
    let clock = Instant::now();
    for t in 0..opts.max_iterations {
        let before = st.clone();
        let f_before = cur.f_aug;
        let mut accepted = [false; 5];
        let try_accept = |cand: SolverState, st: &mut SolverState, cur: &mut ObjectiveBreakdown| -> Result<bool, LbcdError> {
            let b = augmented_objective(p, &cand)?;
            if b.f_aug >= cur.f_aug - cur.mc_slack {
                *st = cand;
                *cur = b;
                Ok(true)
            } else {
                Ok(false)
            }
        };
        // E: training design does not enter f_aug; searched once.
        if t == 0 {
            let (ce, rep) = optimize_ce_block(c, &p.channels, &st.ce, st.res.tau_ce, opts.ce_search)
                .map_err(block_err(t, "E"))?;
            st.ce = ce;
            st.ce_report = rep;
        } else {
            st.ce_report = ce_report(c, &p.channels, &st.ce, st.res.tau_ce).map_err(block_err(t, "E"))?;
        }
        accepted[0] = true;
        // D
        let comp = components(p, &st)?;
        let res = optimize_resources_block(p, &comp, &st.res)?;
        let mut cand = st.clone();
        cand.bf = rescale_beamformers(&st.bf, st.res.p_comm, res.p_comm);
        cand.res = res;
        accepted[1] = try_accept(cand, &mut st, &mut cur)?;
        // A
        if !p.targets.is_empty() && c.alpha > 0.0 {
            let out = optimize_sensing_block(&SensingBlockInput {
                model: &p.model,
                channels: &p.channels,
                targets: &p.targets,
                start: &st.sense,
                comm: &st.comm,
                p_sense: st.res.p_sense,
                tau_sense: st.res.tau_sense,
                weight: c.alpha / p.benchmarks.crb_min,
                lambda_phi: st.lambda_phi,
                delta_phi: &c.delta_phi,
                sweeps: opts.layer_sweeps,
                rcg,
            })
            .map_err(block_err(t, "A"))?;
            let mut cand = st.clone();
            cand.sense = out.profile;
            accepted[2] = try_accept(cand, &mut st, &mut cur)?;
        }
        // B
        let g = cascade(&st.comm, &p.channels)?;
        let out = optimize_beamforming_block(&BeamformingInput {
            design: &p.design,
            g: &g,
            start: &st.bf,
            p_comm: st.res.p_comm,
            rf_chains: c.rf_chains,
            floor_weight: p.relative_floor_weight(&st.res),
            iterations: opts.bf_iterations,
        });
        let mut cand = st.clone();
        cand.bf = out.beamformers;
        accepted[3] = try_accept(cand, &mut st, &mut cur)?;
        // C
        let w = p.secrecy_weight(&st.res);
        if w > 0.0 {
            let out = optimize_comm_sim_block(&CommSimInput {
                design: &p.design,
                channels: &p.channels,
                beamformers: &st.bf,
                start: &st.comm,
                sense: &st.sense,
                weight: w,
                floor_weight: p.relative_floor_weight(&st.res),
                lambda_phi: st.lambda_phi,
                delta_phi: &c.delta_phi,
                sweeps: opts.layer_sweeps,
                rcg,
            })
            .map_err(block_err(t, "C"))?;
            let mut cand = st.clone();
            cand.comm = out.profile;
            accepted[4] = try_accept(cand, &mut st, &mut cur)?;
        }
        // Penalty schedule; f_aug is re-evaluated under the new weight.
        st.lambda_phi = (c.penalty.kappa_lambda * st.lambda_phi).min(c.penalty.lambda_max);
        st.iteration = t + 1;
        cur = augmented_objective(p, &st)?;
        let outage_gap = cur.design_outage.iter().cloned().fold(0.0, f64::max) - c.eps_out;
        let crb_gap = if p.targets.is_empty() { 0.0 } else { (cur.crb_total - p.crb_budget) / p.crb_budget };
        trace.push(IterationRecord {
            iteration: t + 1,
            breakdown: cur.clone(),
            delta_f: cur.f_aug - f_before,
            delta_theta: phase_change(&before, &st),
            outage_gap,
            crb_gap,
            lambda_phi: st.lambda_phi,
            accepted,
            wall_time: clock.elapsed().as_secs_f64(),
        });
        status = convergence_check(&trace, &c.tolerances);
        if status.converged {
            converged_at = Some(t + 1);
            break;
        }
    }
    let (quantized, quantized_breakdown) = discretize(p, &st, opts)?;
    Ok(LbcdResult { initial, breakdown: augmented_objective(p, &st)?, state: st, quantized, quantized_breakdown, trace, status, converged_at })
}

fn quantization_sensitivity(prof: &PhaseProfile, bits: &[u32]) -> Vec<Vec<f64>> {
    let q = quantize(prof, bits);
    prof.phases
        .iter()
        .zip(&q.phases)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| crate::metasurface::circular_distance(*x, *y)).collect())
        .collect()
}

/// Quantizes every profile to the configured bits, then greedy ±1-step
/// refinement of the comm and sensing profiles on −f_aug, most sensitive
/// elements first.
pub fn discretize(p: &Problem, st: &SolverState, opts: &LbcdOptions) -> Result<(SolverState, ObjectiveBreakdown), LbcdError> {
    let bits = &p.config.phase_bits;
    let mut q = st.clone();
    q.ce.base = quantize(&st.ce.base, bits);
    let out_bits = *bits.last().unwrap_or(&1);
    for off in q.ce.offsets.iter_mut() {
        for x in off.iter_mut() {
            *x = crate::metasurface::quantize_phase(*x, out_bits);
        }
    }
    q.sense = quantize(&st.sense, bits);
    q.comm = quantize(&st.comm, bits);
    refit_beamformers(p, &mut q, opts)?;
    if opts.local_search_passes > 0 {
        let sens = quantization_sensitivity(&st.comm, bits);
        let base = q.clone();
        let mut obj = |prof: &PhaseProfile| -> f64 {
            let mut s = base.clone();
            s.comm = prof.clone();
            augmented_objective(p, &s).map(|b| -b.f_aug).unwrap_or(f64::INFINITY)
        };
        q.comm = local_search(&st.comm, bits, &mut obj, opts.local_search_passes, Some(&sens)).profile;
        refit_beamformers(p, &mut q, opts)?;
        if !p.targets.is_empty() && p.config.alpha > 0.0 {
            let sens = quantization_sensitivity(&st.sense, bits);
            let base = q.clone();
            let mut obj = |prof: &PhaseProfile| -> f64 {
                let mut s = base.clone();
                s.sense = prof.clone();
                augmented_objective(p, &s).map(|b| -b.f_aug).unwrap_or(f64::INFINITY)
            };
            q.sense = local_search(&st.sense, bits, &mut obj, opts.local_search_passes, Some(&sens)).profile;
        }
    }
    q.ce.base.quantized = true;
    q.sense.quantized = true;
    q.comm.quantized = true;
    q.ce_report = ce_report(&p.config, &p.channels, &q.ce, q.res.tau_ce)?;
    let b = augmented_objective(p, &q)?;
    Ok((q, b))
}

/// Block B on the quantized cascade, kept only when f_aug improves.
fn refit_beamformers(p: &Problem, q: &mut SolverState, opts: &LbcdOptions) -> Result<(), LbcdError> {
    let g = cascade(&q.comm, &p.channels)?;
    let out = optimize_beamforming_block(&BeamformingInput {
        design: &p.design,
        g: &g,
        start: &q.bf,
        p_comm: q.res.p_comm,
        rf_chains: p.config.rf_chains,
        floor_weight: p.relative_floor_weight(&q.res),
        iterations: opts.bf_iterations,
    });
    let mut cand = q.clone();
    cand.bf = out.beamformers;
    if augmented_objective(p, &cand)?.f_aug > augmented_objective(p, q)?.f_aug {
        *q = cand;
    }
    Ok(())
}
