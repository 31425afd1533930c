//! Comparator schemes: time sharing (TS), communication-first (CF),
//! sensing-first (SF), single-layer RIS (SL-RIS) and the non-robust solver
//! (NR-LBCD), plus the common metric evaluation used for every scheme.
//!
//! All schemes of one seed draw from the same derived streams, so their
//! metrics form paired samples.

use crate::channel::{realize, ChannelError};
use crate::lbcd::{
    available_time, augmented_objective, components, crb_unit, discretize, initial_state, run_lbcd, Benchmarks,
    Components, IterationRecord, LbcdError, LbcdOptions, Problem, ResourceAllocation, ResourceModel, SolverState,
};
use crate::metasurface::{cascade, RcgOptions};
use crate::scenario::{stream_index, ScenarioConfig};
use crate::security::{
    analyze, evaluate_secrecy, optimize_beamforming_block, optimize_comm_sim_block, BeamformingInput, CommSimInput,
};
use crate::sensing::{optimize_sensing_block, targets_from, SensingBlockInput};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Allowed relative loss of the priority metric in CF and SF.
pub const PRIORITY_CAP: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Lbcd,
    TimeSharing,
    CommFirst,
    SenseFirst,
    SingleLayerRis,
    NonRobust,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Lbcd,
        Scheme::TimeSharing,
        Scheme::CommFirst,
        Scheme::SenseFirst,
        Scheme::SingleLayerRis,
        Scheme::NonRobust,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Lbcd => "lbcd",
            Scheme::TimeSharing => "ts",
            Scheme::CommFirst => "cf",
            Scheme::SenseFirst => "sf",
            Scheme::SingleLayerRis => "sl_ris",
            Scheme::NonRobust => "nr_lbcd",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Lbcd(#[from] LbcdError),
}

/// Scheme-independent metrics of a final state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Σ_k Monte-Carlo mean secrecy rate under the true uncertainty.
    pub sum_secrecy: f64,
    /// Σ_k secrecy at the nominal eavesdropper locations and perfect CSI.
    pub nominal_sum_secrecy: f64,
    /// Per-user Monte-Carlo outage P(R_k^sec < R_min).
    pub outage: Vec<f64>,
    pub max_outage: f64,
    /// Every user meets its secrecy target on the solver's own design draws.
    pub design_satisfied: bool,
    pub crb_total: f64,
    /// CRB_min / CRB_total.
    pub inv_norm_crb: f64,
    /// (1−α)·τ_comm·sum_secrecy/R_max − α·CRB_total/CRB_min.
    pub utility: f64,
    /// Augmented objective as seen by the solver.
    pub f_aug: f64,
    pub resources: ResourceAllocation,
    pub reconfig: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SchemeRun {
    pub scheme: Scheme,
    /// Metrics of the quantized (deployable) state.
    pub metrics: Metrics,
    /// Metrics of the continuous-phase state.
    pub continuous: Metrics,
    pub state: SolverState,
    pub continuous_state: SolverState,
    pub trace: Vec<IterationRecord>,
    pub converged_at: Option<usize>,
    /// CF/SF: (priority value after stage one, after stage two).
    pub priority: Option<(f64, f64)>,
    /// Benchmarks the metrics are normalized by.
    pub benchmarks: Benchmarks,
}

/// Channels, targets and benchmarks of a scenario.
pub fn prepare(config: &ScenarioConfig) -> Result<Problem, BaselineError> {
    let (geom, ch) = realize(config)?;
    let targets = targets_from(config, &geom);
    Ok(Problem::new(config, &ch, &targets)?)
}

/// Same as [`prepare`] with benchmarks supplied by the caller.
pub fn prepare_with(config: &ScenarioConfig, benchmarks: Benchmarks) -> Result<Problem, BaselineError> {
    let (geom, ch) = realize(config)?;
    let targets = targets_from(config, &geom);
    Ok(Problem::with_benchmarks(config, &ch, &targets, benchmarks))
}

/// Monte-Carlo metrics of `st` on the evaluation stream.
pub fn evaluate(p: &Problem, st: &SolverState, bench: &Benchmarks) -> Result<Metrics, LbcdError> {
    let c = &p.config;
    let g = cascade(&st.comm, &p.channels)?;
    let rep = evaluate_secrecy(c, &p.channels, &p.design, &g, &st.bf.transmit_set(), c.mc_samples, stream_index::EVALUATION);
    let crb_total = if p.targets.is_empty() { 0.0 } else { crb_unit(p, &st.sense)? / (st.res.tau_sense * st.res.p_sense) };
    let inv_norm_crb = if crb_total > 0.0 { bench.crb_min / crb_total } else { 0.0 };
    let utility =
        (1.0 - c.alpha) * st.res.tau_comm * rep.mc_sum_secrecy / bench.r_max - c.alpha * crb_total / bench.crb_min;
    let b = augmented_objective(p, st)?;
    let design = analyze(&p.design, &(g * st.bf.transmit_set()), 0.0, false);
    Ok(Metrics {
        design_satisfied: design.users.iter().all(|u| u.satisfied),
        sum_secrecy: rep.mc_sum_secrecy,
        nominal_sum_secrecy: rep.sum_secrecy,
        max_outage: rep.outage.iter().cloned().fold(0.0, f64::max),
        outage: rep.outage,
        crb_total,
        inv_norm_crb,
        utility,
        f_aug: b.f_aug,
        resources: st.res,
        reconfig: b.reconfig,
    })
}

/// Runs `scheme` on `config`. With `reference` set, both the optimization
/// and the reported utility use those benchmarks (needed when schemes differ
/// in hardware, as SL-RIS does).
pub fn run_scheme(
    scheme: Scheme,
    config: &ScenarioConfig,
    reference: Option<Benchmarks>,
    opts: &LbcdOptions,
) -> Result<SchemeRun, BaselineError> {
    let config = match scheme {
        Scheme::SingleLayerRis => single_layer(config),
        Scheme::NonRobust => ScenarioConfig { robust: false, ..config.clone() },
        _ => config.clone(),
    };
    let p = match reference {
        Some(b) => prepare_with(&config, b)?,
        None => prepare(&config)?,
    };
    Ok(match scheme {
        Scheme::Lbcd | Scheme::SingleLayerRis | Scheme::NonRobust => run_joint(scheme, &p, opts)?,
        Scheme::TimeSharing => run_time_sharing(&p, opts)?,
        Scheme::CommFirst => run_lexicographic(&p, Priority::Comm, opts)?,
        Scheme::SenseFirst => run_lexicographic(&p, Priority::Sense, opts)?,
    })
}

/// One layer holding every element of the multi-layer surface.
pub fn single_layer(config: &ScenarioConfig) -> ScenarioConfig {
    config.with_layer_sizes(&[config.total_elements()])
}

fn finish(
    scheme: Scheme,
    p: &Problem,
    continuous_state: SolverState,
    state: SolverState,
    trace: Vec<IterationRecord>,
    converged_at: Option<usize>,
    priority: Option<(f64, f64)>,
) -> Result<SchemeRun, LbcdError> {
    let bench = p.benchmarks;
    Ok(SchemeRun {
        scheme,
        metrics: evaluate(p, &state, &bench)?,
        continuous: evaluate(p, &continuous_state, &bench)?,
        state,
        continuous_state,
        trace,
        converged_at,
        priority,
        benchmarks: bench,
    })
}

fn run_joint(scheme: Scheme, p: &Problem, opts: &LbcdOptions) -> Result<SchemeRun, LbcdError> {
    let r = run_lbcd(p, opts)?;
    finish(scheme, p, r.state, r.quantized, r.trace, r.converged_at, None)
}

#[path = "baselines_split.rs"]
mod split;
pub use split::*;
