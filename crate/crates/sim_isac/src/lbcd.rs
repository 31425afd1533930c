//! Outer layered block coordinate descent: resource allocation (Block D),
//! benchmarks, the augmented objective and the E→D→A→B→C loop.

use crate::channel::ChannelSet;
use crate::metasurface::{
    beamformer_match, cascade, project_reconfig_ball, reconfig_distance, svd_init_target, MetasurfaceError, PhaseProfile,
    Purpose, RcgOptions,
};
use crate::scenario::{derive_stream, stream_index, PurposeTag, ScenarioConfig};
use crate::security::{
    analyze, ce_report, maximize_capacity, mrt_init, Beamformers, CeDesign, CeReport, DesignSet, PowerProfile,
    SecurityError,
};
use crate::sensing::{optimize_sensing_block, SensingBlockInput, SensingError, SensingModel, TargetParams};
use crate::CMat;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[path = "lbcd_loop.rs"]
mod outer;
pub use outer::*;

#[derive(Debug, Error)]
pub enum LbcdError {
    #[error("empty feasible set: 3·τ_min + switching overhead = {0} > 1")]
    EmptyFeasibleSet(f64),
    #[error("degenerate channels: R_max = {0}")]
    DegenerateChannels(f64),
    #[error("iteration {iteration}, block {block}: {message}")]
    Block { iteration: usize, block: &'static str, message: String },
    #[error(transparent)]
    Metasurface(#[from] MetasurfaceError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Security(#[from] SecurityError),
}

// ---------------------------------------------------------------------------
// Resources
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceAllocation {
    pub tau_ce: f64,
    pub tau_sense: f64,
    pub tau_comm: f64,
    pub p_sense: f64,
    pub p_comm: f64,
}

/// Constraint residuals (positive means violated).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    pub time: f64,
    pub energy: f64,
    pub tau_box: f64,
    pub power: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.time.max(self.energy).max(self.tau_box).max(self.power)
    }
}

impl ResourceAllocation {
    pub fn residuals(&self, c: &ScenarioConfig) -> Residuals {
        let taus = [self.tau_ce, self.tau_sense, self.tau_comm];
        Residuals {
            time: taus.iter().sum::<f64>() + c.switch_overhead() - 1.0,
            energy: c.slot_duration * (self.tau_sense * self.p_sense + self.tau_comm * self.p_comm) - c.energy_budget,
            tau_box: taus.iter().map(|&t| (c.tau_min - t).max(t - c.tau_max)).fold(f64::NEG_INFINITY, f64::max),
            power: self.p_sense.max(self.p_comm) - c.p_bs_max,
        }
    }

    pub fn is_feasible(&self, c: &ScenarioConfig) -> bool {
        let r = self.residuals(c);
        r.time <= 1e-12 && r.energy <= 1e-9 && r.tau_box <= 1e-12 && r.power <= 1e-12
            && self.p_sense >= 0.0
            && self.p_comm >= 0.0
    }

    /// Algorithm start: CE at its minimum, the rest split evenly, both
    /// powers at the largest value the energy budget allows.
    pub fn initial(c: &ScenarioConfig) -> Result<ResourceAllocation, LbcdError> {
        let avail = available_time(c)?;
        let half = (0.5 * avail).clamp(c.tau_min, c.tau_max);
        let p = c.p_bs_max.min(c.energy_budget / (c.slot_duration * 2.0 * half));
        Ok(ResourceAllocation { tau_ce: c.tau_min, tau_sense: half, tau_comm: half, p_sense: p, p_comm: p })
    }
}

/// Time left for sensing and communication once CE sits at τ_min.
pub fn available_time(c: &ScenarioConfig) -> Result<f64, LbcdError> {
    let need = 3.0 * c.tau_min + c.switch_overhead();
    if need > 1.0 {
        return Err(LbcdError::EmptyFeasibleSet(need));
    }
    Ok(1.0 - c.switch_overhead() - c.tau_min)
}

// ---------------------------------------------------------------------------
// Problem context and objective
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmarks {
    pub r_max: f64,
    pub crb_min: f64,
}

/// Everything fixed during one solve.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: ScenarioConfig,
    pub channels: ChannelSet,
    pub targets: Vec<TargetParams>,
    pub design: DesignSet,
    pub model: SensingModel,
    pub benchmarks: Benchmarks,
    /// Γ_max on CRB_total.
    pub crb_budget: f64,
    /// Weight μ of the SINR-floor and secrecy-target hinges inside the
    /// secrecy term.
    pub floor_weight: f64,
}

fn bench_rcg(c: &ScenarioConfig) -> RcgOptions {
    RcgOptions { max_iter: c.benchmark_iterations, ..RcgOptions::default() }
}

/// R_max: log-det rate at full power from the SVD-matched comm profile after
/// a fixed RCG budget. CRB_min: Block A alone at full power and time.
pub fn compute_benchmarks(
    config: &ScenarioConfig,
    channels: &ChannelSet,
    targets: &[TargetParams],
) -> Result<(Benchmarks, PhaseProfile, PhaseProfile), LbcdError> {
    let sizes = config.elements_per_layer.clone();
    let zeros = PhaseProfile::zeros(&sizes, Purpose::Comm);
    let comm0 = svd_comm_profile(config, channels, &zeros, f64::INFINITY)?;
    let (r_max, comm) =
        maximize_capacity(channels, &comm0, config.p_bs_max, config.noise_power, 1, bench_rcg(config))?;
    if !(r_max > 0.0) {
        return Err(LbcdError::DegenerateChannels(r_max));
    }
    let model = SensingModel::new(config, channels);
    let (sense, crb) = sensing_presolve(config, channels, targets, &model)?;
    let crb_min = if targets.is_empty() { 1.0 } else { crb };
    Ok((Benchmarks { r_max, crb_min }, comm, sense))
}

/// Block A alone from the coverage profile at full power and time, without
/// reconfiguration coupling. Returns the profile and its CRB_total.
pub fn sensing_presolve(
    config: &ScenarioConfig,
    channels: &ChannelSet,
    targets: &[TargetParams],
    model: &SensingModel,
) -> Result<(PhaseProfile, f64), LbcdError> {
    refine_sensing(config, channels, targets, model, &coverage_profile(config, channels, model))
}

/// Sensing-only Block A started from `sense0`.
pub fn refine_sensing(
    config: &ScenarioConfig,
    channels: &ChannelSet,
    targets: &[TargetParams],
    model: &SensingModel,
    sense0: &PhaseProfile,
) -> Result<(PhaseProfile, f64), LbcdError> {
    let sense0 = sense0.clone();
    if targets.is_empty() {
        return Ok((sense0, 0.0));
    }
    let big = vec![f64::INFINITY; config.layers];
    // Unit-scale objective so the RCG gradient tolerance is meaningful.
    let g0 = cascade(&sense0, channels)?;
    let crb0 = model.crb_total(targets, &g0, config.p_bs_max, 1.0).total_approx;
    let weight = if crb0.is_finite() && crb0 > 0.0 { 1.0 / crb0 } else { 1.0 };
    let out = optimize_sensing_block(&SensingBlockInput {
        model,
        channels,
        targets,
        start: &sense0,
        comm: &sense0,
        p_sense: config.p_bs_max,
        tau_sense: 1.0,
        weight,
        lambda_phi: 0.0,
        delta_phi: &big,
        sweeps: 1,
        rcg: bench_rcg(config),
    })?;
    Ok((out.profile, out.crb.total_approx))
}

/// Comm start: Frobenius match of the cascade to the SVD target of the
/// aggregate user channel.
pub fn svd_comm_profile(
    c: &ScenarioConfig,
    ch: &ChannelSet,
    sense: &PhaseProfile,
    lambda: f64,
) -> Result<PhaseProfile, LbcdError> {
    let h = CMat::from_columns(&ch.sim_to_user);
    let target = svd_init_target(ch, &h);
    let zeros = PhaseProfile::zeros(&c.elements_per_layer, Purpose::Comm);
    let lam = if lambda.is_finite() { lambda } else { 0.0 };
    let opts = RcgOptions { max_iter: 30, ..RcgOptions::default() };
    let (p, _) = beamformer_match(&target, ch, &zeros, sense, lam, &c.delta_phi, 2, opts)?;
    Ok(p.with_purpose(Purpose::Comm))
}

/// Wide-coverage sensing start (best of 20 random draws).
pub fn coverage_profile(c: &ScenarioConfig, ch: &ChannelSet, model: &SensingModel) -> PhaseProfile {
    let mut rng = derive_stream(c, PurposeTag::Randomization, stream_index::SENSE_INIT).rng();
    let mid = 0.5 * (c.geometry.link_distance_min + c.geometry.link_distance_max);
    crate::sensing::max_angular_coverage(model, ch, mid, 20, &mut rng)
}

impl Problem {
    pub fn new(config: &ScenarioConfig, channels: &ChannelSet, targets: &[TargetParams]) -> Result<Problem, LbcdError> {
        let (benchmarks, _, _) = compute_benchmarks(config, channels, targets)?;
        Ok(Problem::with_benchmarks(config, channels, targets, benchmarks))
    }

    pub fn with_benchmarks(
        config: &ScenarioConfig,
        channels: &ChannelSet,
        targets: &[TargetParams],
        benchmarks: Benchmarks,
    ) -> Problem {
        Problem {
            config: config.clone(),
            channels: channels.clone(),
            targets: targets.to_vec(),
            design: DesignSet::from_config(config, channels),
            model: SensingModel::new(config, channels),
            benchmarks,
            crb_budget: config.crb_budget_factor * benchmarks.crb_min,
            floor_weight: 10.0,
        }
    }

    /// Weight of Σ surrogate in f_aug.
    pub fn secrecy_weight(&self, res: &ResourceAllocation) -> f64 {
        (1.0 - self.config.alpha) * res.tau_comm / self.benchmarks.r_max
    }

    /// Weight of the unit rate hinges in f_aug. Rate targets hold per
    /// channel use, so the hinges are not discounted by τ_comm.
    pub fn hinge_weight(&self) -> f64 {
        (1.0 - self.config.alpha) * self.floor_weight / self.benchmarks.r_max
    }

    /// Hinge weight relative to the surrogate, as seen by Blocks B and C.
    pub fn relative_floor_weight(&self, res: &ResourceAllocation) -> f64 {
        if res.tau_comm > 0.0 {
            self.floor_weight / res.tau_comm
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// (1−α)·τ_comm·Σ surrogate / R_max.
    pub secrecy_term: f64,
    /// α·CRB_total / CRB_min.
    pub sensing_term: f64,
    /// λ_Φ·Σ_l [d_l − δ_l]₊ plus the weighted SINR-floor hinge.
    pub penalty_term: f64,
    pub utility: f64,
    pub f_aug: f64,
    pub sum_surrogate: f64,
    pub crb_total: f64,
    /// 3·(MC standard error of the secrecy term).
    pub mc_slack: f64,
    /// Per-user fraction of design draws below R_min.
    pub design_outage: Vec<f64>,
    pub reconfig: Vec<f64>,
}

/// Unit-power, unit-time CRB_total of a sensing profile.
pub fn crb_unit(p: &Problem, sense: &PhaseProfile) -> Result<f64, LbcdError> {
    let g = cascade(sense, &p.channels)?;
    Ok(p.model.crb_total(&p.targets, &g, 1.0, 1.0).total_approx)
}

/// Per-state quantities that Block D rescales in closed form.
pub struct Components {
    pub power: PowerProfile,
    pub crb_unit: f64,
    pub std_sum: f64,
    pub samples: usize,
}

pub fn components(p: &Problem, st: &SolverState) -> Result<Components, LbcdError> {
    let g = cascade(&st.comm, &p.channels)?;
    let a = analyze(&p.design, &(g * st.bf.transmit_set()), 1.0, false);
    Ok(Components {
        power: a.power,
        crb_unit: crb_unit(p, &st.sense)?,
        std_sum: a.users.iter().map(|u| u.std).sum(),
        samples: p.design.eve_samples.len(),
    })
}

pub fn augmented_objective(p: &Problem, st: &SolverState) -> Result<ObjectiveBreakdown, LbcdError> {
    let c = &p.config;
    let g = cascade(&st.comm, &p.channels)?;
    let y = g * st.bf.transmit_set();
    let a = analyze(&p.design, &y, 1.0, false);
    let w = p.secrecy_weight(&st.res);
    let secrecy_term = w * a.surrogate;
    let crb_total = if p.targets.is_empty() { 0.0 } else { crb_unit(p, &st.sense)? / (st.res.tau_sense * st.res.p_sense) };
    let sensing_term = c.alpha * crb_total / p.benchmarks.crb_min;
    let reconfig = reconfig_distance(&st.sense, &st.comm)?;
    let hinge: f64 = reconfig.iter().zip(&c.delta_phi).map(|(d, dl)| (d - dl).max(0.0)).sum();
    let penalty_term = st.lambda_phi * hinge + p.hinge_weight() * a.floor_penalty;
    let n = p.design.eve_samples.len().max(1) as f64;
    let mc_slack = 3.0 * w * a.users.iter().map(|u| u.std).sum::<f64>() / n.sqrt();
    let design_outage = design_outage(p, &y);
    Ok(ObjectiveBreakdown {
        secrecy_term,
        sensing_term,
        penalty_term,
        utility: secrecy_term - sensing_term,
        f_aug: secrecy_term - sensing_term - penalty_term,
        sum_surrogate: a.surrogate,
        crb_total,
        mc_slack,
        design_outage,
        reconfig,
    })
}

fn design_outage(p: &Problem, y: &CMat) -> Vec<f64> {
    let a = analyze(&p.design, y, 0.0, false);
    let noise = p.design.noise;
    a.power
        .user
        .iter()
        .zip(&a.power.eve)
        .map(|(&(s, i), draws)| {
            let lu = (1.0 + s / (i + noise)).log2();
            let bad = draws
                .iter()
                .filter(|d| {
                    let le = d.iter().map(|&(s, i)| (1.0 + s / (i + noise)).log2()).fold(0.0, f64::max);
                    (lu - le).max(0.0) < p.design.rate_min
                })
                .count();
            bad as f64 / draws.len().max(1) as f64
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Block D
// ---------------------------------------------------------------------------

const INFEASIBLE: f64 = 1e9;

/// Utility of an allocation given the closed-form components; `None` when
/// infeasible.
pub struct ResourceModel<'a> {
    pub problem: &'a Problem,
    pub comp: &'a Components,
    /// p_comm at which the components were measured.
    pub p_ref: f64,
    cache: HashMap<u64, (f64, f64)>,
}

impl<'a> ResourceModel<'a> {
    pub fn new(problem: &'a Problem, comp: &'a Components, p_ref: f64) -> Self {
        ResourceModel { problem, comp, p_ref, cache: HashMap::new() }
    }

    /// (Σ surrogate, unit-weight hinge sum) at comm power `p`.
    pub fn secrecy_at(&mut self, p: f64) -> (f64, f64) {
        let key = p.to_bits();
        if let Some(v) = self.cache.get(&key) {
            return *v;
        }
        let c = if self.p_ref > 0.0 { p / self.p_ref } else { 0.0 };
        let sur = self.comp.power.surrogate_at(c);
        let pen = sur - self.comp.power.value_at(c, 1.0, self.problem.config.gamma_min);
        self.cache.insert(key, (sur, pen));
        (sur, pen)
    }

    /// U(α) minus the rate hinges. Allocations that break the CRB budget
    /// Γ_max score below every feasible one, less so the smaller the breach.
    pub fn utility(&mut self, r: &ResourceAllocation) -> f64 {
        let c = &self.problem.config;
        let b = &self.problem.benchmarks;
        let (sur, pen) = self.secrecy_at(r.p_comm);
        let sec = (1.0 - c.alpha) * r.tau_comm * sur / b.r_max - self.problem.hinge_weight() * pen;
        if self.problem.targets.is_empty() {
            return sec;
        }
        let e = r.tau_sense * r.p_sense;
        if !(e > 0.0) {
            return f64::NEG_INFINITY;
        }
        let crb = self.comp.crb_unit / e;
        let over = crb / self.problem.crb_budget - 1.0;
        if over > 1e-12 {
            // Below every feasible value, ordered by the violation.
            return -INFEASIBLE * (1.0 + over);
        }
        sec - c.alpha * crb / b.crb_min
    }

    /// Largest feasible p_comm for the given split and sensing energy share.
    pub fn complete(&self, tau_sense: f64, tau_comm: f64, p_sense: f64) -> Option<ResourceAllocation> {
        let c = &self.problem.config;
        let left = c.energy_budget / c.slot_duration - tau_sense * p_sense;
        if left < 0.0 {
            return None;
        }
        let p_comm = c.p_bs_max.min(left / tau_comm);
        let r = ResourceAllocation { tau_ce: c.tau_min, tau_sense, tau_comm, p_sense, p_comm };
        // Shave rounding so the energy residual stays non-positive.
        let mut r = r;
        while r.residuals(c).energy > 0.0 {
            r.p_comm = f64::from_bits(r.p_comm.to_bits() - 1).max(0.0);
        }
        r.is_feasible(c).then_some(r)
    }
}

/// Block D: τ_comm fills the time left by τ_sense, p_comm takes the energy
/// left by sensing. The sensing split is found in closed form when energy
/// does not bind (time multiplier); otherwise a 1-D search on the sensing
/// energy share. A 51×51 grid over (τ_sense, p_sense) with two zoom levels
/// polishes the result; the incoming allocation is always a candidate.
pub fn optimize_resources_block(
    problem: &Problem,
    comp: &Components,
    current: &ResourceAllocation,
) -> Result<ResourceAllocation, LbcdError> {
    let c = &problem.config;
    let avail = available_time(c)?;
    let mut m = ResourceModel::new(problem, comp, current.p_comm);
    let mut best = (m.utility(current), *current);
    let (lo, hi) = (c.tau_min, c.tau_max);
    let pmax = c.p_bs_max;
    let tau_comm_of = |ts: f64| (avail - ts).min(hi);
    let consider = |m: &mut ResourceModel, ts: f64, ps: f64, best: &mut (f64, ResourceAllocation)| {
        let ts = ts.clamp(lo, hi);
        let tc = tau_comm_of(ts);
        if tc < lo {
            return;
        }
        for tc in [tc, lo] {
            if let Some(r) = m.complete(ts, tc, ps.clamp(0.0, pmax)) {
                let u = m.utility(&r);
                if u > best.0 {
                    *best = (u, r);
                }
            }
        }
    };
    // Closed form with both powers at P: d/dτ_s of −B/(P·τ_s) equals the
    // secrecy slope A·S(P).
    let a_coef = (1.0 - c.alpha) * m.secrecy_at(pmax).0 / problem.benchmarks.r_max;
    let b_coef = c.alpha * comp.crb_unit / problem.benchmarks.crb_min;
    let ts_star = if a_coef > 0.0 && b_coef > 0.0 { (b_coef / (pmax * a_coef)).sqrt() } else if b_coef > 0.0 { hi } else { lo };
    consider(&mut m, ts_star, pmax, &mut best);
    consider(&mut m, lo, pmax, &mut best);
    consider(&mut m, hi, pmax, &mut best);
    // Sensing energy share when energy binds: τ_s = max(τ_min, e/P).
    let e_tot = c.energy_budget / c.slot_duration;
    let e_hi = e_tot.min(hi * pmax);
    for i in 0..=200 {
        let e = e_hi * (i as f64 + 0.5) / 201.0;
        let ts = (e / pmax).max(lo);
        consider(&mut m, ts, e / ts, &mut best);
    }
    // Grid polish with zoom.
    let (mut ts_lo, mut ts_hi, mut ps_lo, mut ps_hi) = (lo, hi.min(avail - lo), 0.0, pmax);
    for _ in 0..3 {
        for i in 0..51 {
            let ts = ts_lo + (ts_hi - ts_lo) * i as f64 / 50.0;
            for j in 0..51 {
                let ps = ps_lo + (ps_hi - ps_lo) * j as f64 / 50.0;
                consider(&mut m, ts, ps, &mut best);
            }
        }
        let (dt, dp) = ((ts_hi - ts_lo) / 50.0, (ps_hi - ps_lo) / 50.0);
        let (bt, bp) = (best.1.tau_sense, best.1.p_sense);
        ts_lo = (bt - 2.0 * dt).max(lo);
        ts_hi = (bt + 2.0 * dt).min(hi);
        ps_lo = (bp - 2.0 * dp).max(0.0);
        ps_hi = (bp + 2.0 * dp).min(pmax);
    }
    Ok(best.1)
}

/// Dense-grid reference: τ_sense, τ_comm and p_sense on `n` points each,
/// p_comm the largest feasible.
pub fn resource_grid_oracle(problem: &Problem, comp: &Components, p_ref: f64, n: usize) -> (f64, ResourceAllocation) {
    let c = &problem.config;
    let mut m = ResourceModel::new(problem, comp, p_ref);
    let mut best = (f64::NEG_INFINITY, ResourceAllocation::initial(c).expect("feasible"));
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    for i in 0..n {
        let ts = step(c.tau_min, c.tau_max, i);
        for j in 0..n {
            let tc = step(c.tau_min, c.tau_max, j);
            if ts + tc + c.tau_min + c.switch_overhead() > 1.0 + 1e-12 {
                continue;
            }
            for k in 0..n {
                let ps = step(0.0, c.p_bs_max, k);
                if let Some(r) = m.complete(ts, tc, ps) {
                    let u = m.utility(&r);
                    if u > best.0 {
                        best = (u, r);
                    }
                }
            }
        }
    }
    best
}

/// Beamformers rescaled to a new comm power.
pub fn rescale_beamformers(bf: &Beamformers, from: f64, to: f64) -> Beamformers {
    if from > 0.0 {
        bf.scaled(to / from)
    } else {
        bf.clone()
    }
}

/// Comm start projected into the reconfiguration ball around the sensing
/// start, layer by layer.
pub fn project_comm(comm: &PhaseProfile, sense: &PhaseProfile, delta: &[f64]) -> PhaseProfile {
    let mut out = comm.clone();
    for l in 0..comm.layers() {
        out.set_layer(l, &project_reconfig_ball(&comm.phases[l], &sense.phases[l], delta[l]));
    }
    out
}

pub fn initial_state(p: &Problem) -> Result<SolverState, LbcdError> {
    let c = &p.config;
    let svd = svd_comm_profile(c, &p.channels, &coverage_profile(c, &p.channels, &p.model), f64::INFINITY)?;
    let (mut sense, _) = refine_sensing(c, &p.channels, &p.targets, &p.model, &svd)?;
    sense.purpose = Purpose::Sense;
    let comm = project_comm(&svd, &sense, &c.delta_phi);
    let res = ResourceAllocation::initial(c)?;
    let g = cascade(&comm, &p.channels)?;
    let bf = mrt_init(&p.design, &g, res.p_comm, c.rf_chains);
    let ce = CeDesign::ramp(
        &PhaseProfile::zeros(&c.elements_per_layer, Purpose::Ce),
        crate::security::ce_configurations(c.output_elements(), c.bs_antennas),
    );
    let ce_rep = ce_report(c, &p.channels, &ce, res.tau_ce)?;
    Ok(SolverState { ce, ce_report: ce_rep, sense, comm, bf, res, lambda_phi: c.penalty.lambda0, iteration: 0 })
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub ce: CeDesign,
    pub ce_report: CeReport,
    pub sense: PhaseProfile,
    pub comm: PhaseProfile,
    pub bf: Beamformers,
    pub res: ResourceAllocation,
    pub lambda_phi: f64,
    pub iteration: usize,
}
