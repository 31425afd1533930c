// Schemes that split the joint problem: TS, CF and SF.

use super::*;

/// Metric a lexicographic scheme protects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Priority {
    /// τ_comm·Σ secrecy surrogate (larger is better).
    Comm,
    /// CRB_total (smaller is better).
    Sense,
}

impl Priority {
    fn value(self, p: &Problem, st: &SolverState) -> Result<f64, LbcdError> {
        let b = augmented_objective(p, st)?;
        Ok(match self {
            Priority::Comm => st.res.tau_comm * b.sum_surrogate,
            Priority::Sense => b.crb_total,
        })
    }

    /// Whether `v` is within the degradation cap of the stage-one value.
    pub fn within_cap(self, v: f64, reference: f64) -> bool {
        match self {
            Priority::Comm => v >= reference - PRIORITY_CAP * reference.abs(),
            Priority::Sense => v <= reference * (1.0 + PRIORITY_CAP),
        }
    }
}

fn rcg(opts: &LbcdOptions) -> RcgOptions {
    RcgOptions { max_iter: opts.rcg_iterations, ..RcgOptions::default() }
}

fn sense_step(p: &Problem, st: &mut SolverState, opts: &LbcdOptions, sweeps: usize) -> Result<(), LbcdError> {
    if p.targets.is_empty() {
        return Ok(());
    }
    let out = optimize_sensing_block(&SensingBlockInput {
        model: &p.model,
        channels: &p.channels,
        targets: &p.targets,
        start: &st.sense,
        comm: &st.comm,
        p_sense: st.res.p_sense,
        tau_sense: st.res.tau_sense,
        weight: 1.0 / p.benchmarks.crb_min,
        lambda_phi: st.lambda_phi,
        delta_phi: &p.config.delta_phi,
        sweeps,
        rcg: rcg(opts),
    })?;
    st.sense = out.profile;
    Ok(())
}

fn comm_step(p: &Problem, st: &mut SolverState, opts: &LbcdOptions) -> Result<(), LbcdError> {
    let g = cascade(&st.comm, &p.channels)?;
    let floor_weight = p.relative_floor_weight(&st.res);
    st.bf = optimize_beamforming_block(&BeamformingInput {
        design: &p.design,
        g: &g,
        start: &st.bf,
        p_comm: st.res.p_comm,
        rf_chains: p.config.rf_chains,
        floor_weight,
        iterations: opts.bf_iterations,
    })
    .beamformers;
    let out = optimize_comm_sim_block(&CommSimInput {
        design: &p.design,
        channels: &p.channels,
        beamformers: &st.bf,
        start: &st.comm,
        sense: &st.sense,
        weight: st.res.tau_comm / p.benchmarks.r_max,
        floor_weight,
        lambda_phi: st.lambda_phi,
        delta_phi: &p.config.delta_phi,
        sweeps: opts.layer_sweeps,
        rcg: rcg(opts),
    })
    .map_err(LbcdError::from)?;
    st.comm = out.profile;
    Ok(())
}

/// Rounds of independent comm updates in TS.
const TS_COMM_ROUNDS: usize = 5;

/// Fixed equal split after the CE minimum, sensing and comm optimized on
/// their own, no reconfiguration coupling.
pub fn run_time_sharing(p: &Problem, opts: &LbcdOptions) -> Result<SchemeRun, LbcdError> {
    let mut c = p.config.clone();
    c.delta_phi = vec![f64::INFINITY; c.layers];
    let p = Problem::with_benchmarks(&c, &p.channels, &p.targets, p.benchmarks);
    let mut st = initial_state(&p)?;
    st.lambda_phi = 0.0;
    sense_step(&p, &mut st, opts, 3)?;
    for _ in 0..TS_COMM_ROUNDS {
        comm_step(&p, &mut st, opts)?;
    }
    let (q, _) = discretize(&p, &st, opts)?;
    finish(Scheme::TimeSharing, &p, st, q, Vec::new(), None, None)
}

/// Best allocation for the secondary metric among those keeping the
/// priority metric within [`PRIORITY_CAP`] of `reference` and the CRB within
/// its budget. Falls back to `current` when no grid point qualifies.
pub fn constrained_resources(
    p: &Problem,
    comp: &Components,
    current: &ResourceAllocation,
    priority: Priority,
    reference: f64,
) -> Result<ResourceAllocation, LbcdError> {
    let c = &p.config;
    let avail = available_time(c)?;
    let mut m = ResourceModel::new(p, comp, current.p_comm);
    let sensing = !p.targets.is_empty();
    // Secondary score of a qualifying allocation.
    let score = |m: &mut ResourceModel, r: &ResourceAllocation| -> Option<f64> {
        let comm = r.tau_comm * m.secrecy_at(r.p_comm).0;
        let crb = if sensing { comp.crb_unit / (r.tau_sense * r.p_sense) } else { 0.0 };
        if sensing && !(crb <= p.crb_budget) {
            return None;
        }
        match priority {
            Priority::Comm => priority.within_cap(comm, reference).then_some(-crb),
            Priority::Sense => priority.within_cap(crb, reference).then_some(comm),
        }
    };
    let mut best = (score(&mut m, current).unwrap_or(f64::NEG_INFINITY), *current);
    let ts_hi = c.tau_max.min(avail - c.tau_min);
    for i in 0..=200 {
        let ts = c.tau_min + (ts_hi - c.tau_min) * i as f64 / 200.0;
        let fill = (avail - ts).min(c.tau_max);
        for j in 1..=100 {
            let ps = c.p_bs_max * j as f64 / 100.0;
            for tc in [fill, c.tau_min] {
                if let Some(r) = m.complete(ts, tc, ps) {
                    if let Some(s) = score(&mut m, &r) {
                        if s > best.0 {
                            best = (s, r);
                        }
                    }
                }
            }
        }
    }
    Ok(best.1)
}

fn reallocate(p: &Problem, st: &mut SolverState, priority: Priority, reference: f64) -> Result<(), LbcdError> {
    let comp = components(p, st)?;
    let res = constrained_resources(p, &comp, &st.res, priority, reference)?;
    st.bf = crate::lbcd::rescale_beamformers(&st.bf, st.res.p_comm, res.p_comm);
    st.res = res;
    Ok(())
}

/// Lexicographic scheme: the L-BCD solver on the priority metric alone,
/// then resources and the secondary blocks improve the other metric while
/// the priority metric stays within the cap.
pub fn run_lexicographic(p: &Problem, priority: Priority, opts: &LbcdOptions) -> Result<SchemeRun, LbcdError> {
    let mut c1 = p.config.clone();
    c1.alpha = match priority {
        Priority::Comm => 0.0,
        Priority::Sense => 1.0,
    };
    let p1 = Problem::with_benchmarks(&c1, &p.channels, &p.targets, p.benchmarks);
    let stage = run_lbcd(&p1, opts)?;
    let mut st = stage.state;
    let reference = priority.value(p, &st)?;
    for _ in 0..2 {
        reallocate(p, &mut st, priority, reference)?;
        match priority {
            Priority::Comm => sense_step(p, &mut st, opts, opts.layer_sweeps)?,
            Priority::Sense => comm_step(p, &mut st, opts)?,
        }
    }
    reallocate(p, &mut st, priority, reference)?;
    let after = priority.value(p, &st)?;
    let (q, _) = discretize(p, &st, opts)?;
    let scheme = match priority {
        Priority::Comm => Scheme::CommFirst,
        Priority::Sense => Scheme::SenseFirst,
    };
    finish(scheme, p, st, q, stage.trace, stage.converged_at, Some((reference, after)))
}
