use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sim_isac::channel::realize;
use sim_isac::lbcd::*;
use sim_isac::scenario::{default_scenario, ScenarioConfig};

fn quiet(seed: u64) -> ScenarioConfig {
    let mut c = default_scenario().desk_scale();
    c.master_seed = seed;
    c.eve_angle_spread = 0.0;
    c.eve_range_spread = 0.0;
    c
}

fn problem(c: &ScenarioConfig) -> Problem {
    let (geom, ch) = realize(c).unwrap();
    let targets = sim_isac::sensing::targets_from(c, &geom);
    Problem::new(c, &ch, &targets).unwrap()
}

fn reuse(base: &Problem, c: &ScenarioConfig) -> Problem {
    Problem::with_benchmarks(c, &base.channels, &base.targets, base.benchmarks)
}

#[test]
fn block_d_matches_dense_grid() {
    let base = problem(&quiet(3));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let mut c = base.config.clone();
        c.alpha = rng.random_range(0.1..0.9);
        c.energy_budget = c.slot_duration * rng.random_range(0.2..1.2);
        let p = reuse(&base, &c);
        let st = initial_state(&p).unwrap();
        let comp = components(&p, &st).unwrap();
        let got = optimize_resources_block(&p, &comp, &st.res).unwrap();
        let r = got.residuals(&c);
        assert!(r.time <= 1e-9 && r.energy <= 1e-9 && r.tau_box <= 1e-12 && r.power <= 1e-12, "{r:?}");
        let mut m = ResourceModel::new(&p, &comp, st.res.p_comm);
        let u = m.utility(&got);
        let (u_grid, _) = resource_grid_oracle(&p, &comp, st.res.p_comm, 61);
        assert!(u >= u_grid - 1e-2, "block D {u} vs grid {u_grid}");
    }
}

#[test]
fn huge_energy_fills_the_slot() {
    let base = problem(&quiet(1));
    let mut c = base.config.clone();
    c.energy_budget = 1e6;
    let p = reuse(&base, &c);
    let st = initial_state(&p).unwrap();
    let comp = components(&p, &st).unwrap();
    let r = optimize_resources_block(&p, &comp, &st.res).unwrap();
    let sum = r.tau_ce + r.tau_sense + r.tau_comm;
    assert!((sum - (1.0 - c.switch_overhead())).abs() <= 1e-6, "τ sum {sum}");
}

#[test]
fn alpha_zero_prefers_communication() {
    let base = problem(&quiet(2));
    let mut c = base.config.clone();
    c.alpha = 0.0;
    let mut p = reuse(&base, &c);
    p.crb_budget = f64::INFINITY;
    let st = initial_state(&p).unwrap();
    let comp = components(&p, &st).unwrap();
    let r = optimize_resources_block(&p, &comp, &st.res).unwrap();
    // τ_max itself does not fit next to two τ_min blocks and the switching
    // overhead, so the longest feasible comm phase is the target.
    let longest = c.tau_max.min(1.0 - c.switch_overhead() - 2.0 * c.tau_min);
    assert!((r.tau_comm - longest).abs() <= 1e-12, "{r:?}");
    assert_eq!(r.tau_sense, c.tau_min);
}

#[test]
fn objective_terms_isolate() {
    let base = problem(&quiet(4));
    for alpha in [0.0, 1.0] {
        let mut c = base.config.clone();
        c.alpha = alpha;
        let mut p = reuse(&base, &c);
        p.floor_weight = 0.0;
        let mut st = initial_state(&p).unwrap();
        st.lambda_phi = 0.0;
        let b = augmented_objective(&p, &st).unwrap();
        assert_eq!(b.penalty_term, 0.0);
        assert_eq!(b.f_aug, b.secrecy_term - b.sensing_term - b.penalty_term);
        if alpha == 0.0 {
            assert_eq!(b.sensing_term, 0.0);
            let want = st.res.tau_comm * b.sum_surrogate / p.benchmarks.r_max;
            assert!((b.f_aug - want).abs() <= 1e-12 * want.abs().max(1.0));
        } else {
            assert_eq!(b.secrecy_term, 0.0);
            assert!((b.f_aug + b.crb_total / p.benchmarks.crb_min).abs() <= 1e-12 * b.f_aug.abs());
        }
        assert_eq!(augmented_objective(&p, &st).unwrap(), b);
    }
}

#[test]
fn zero_iterations_return_the_start() {
    let p = problem(&quiet(5));
    let mut o = LbcdOptions::from_config(&p.config);
    o.max_iterations = 0;
    let r = run_lbcd(&p, &o).unwrap();
    assert!(r.trace.is_empty());
    assert_eq!(r.state.comm, r.initial.comm);
    assert_eq!(r.state.sense, r.initial.sense);
    assert_eq!(r.state.res, r.initial.res);
    assert!(!r.status.converged);
}

#[test]
fn run_is_monotone_deterministic_and_feasible() {
    let p = problem(&quiet(6));
    let o = LbcdOptions::from_config(&p.config);
    let a = run_lbcd(&p, &o).unwrap();
    let b = run_lbcd(&p, &o).unwrap();
    let key = |r: &LbcdResult| r.trace.iter().map(|t| (t.breakdown.clone(), t.delta_f, t.delta_theta)).collect::<Vec<_>>();
    assert_eq!(key(&a), key(&b));
    assert!(a.trace.iter().all(|t| t.delta_f >= -1e-9));
    assert!(a.state.res.is_feasible(&p.config));
    assert!(a.quantized.res.is_feasible(&p.config));
    assert!(a.trace.iter().all(|t| t.lambda_phi <= p.config.penalty.lambda_max));
    assert!(a.converged_at.is_some_and(|t| t <= 20), "{:?}", a.status);
    for (d, dl) in a.breakdown.reconfig.iter().zip(&p.config.delta_phi) {
        assert!(*d <= dl + 1e-3);
    }
}

fn record(delta_f: f64, delta_theta: f64, outage_gap: f64, crb_gap: f64) -> IterationRecord {
    IterationRecord {
        iteration: 1,
        breakdown: ObjectiveBreakdown::default(),
        delta_f,
        delta_theta,
        outage_gap,
        crb_gap,
        lambda_phi: 1.0,
        accepted: [true; 5],
        wall_time: 0.0,
    }
}

#[test]
fn convergence_criteria() {
    let tol = default_scenario().tolerances;
    assert_eq!(tol.eps_obj, 1e-4);
    assert!(!convergence_check(&[], &tol).converged);
    let flat = convergence_check(&[record(0.0, 0.0, 0.0, 0.0)], &tol);
    assert!(flat.converged && flat.reason.is_none());
    let cases = [
        (record(1e-3, 0.0, 0.0, 0.0), "objective"),
        (record(0.0, 0.0, 0.2, 0.0), "outage"),
        (record(0.0, 0.0, 0.0, 0.2), "crb"),
        (record(0.0, 1e-2, 0.0, 0.0), "parameters"),
    ];
    for (r, why) in cases {
        let s = convergence_check(&[r], &tol);
        assert!(!s.converged);
        assert_eq!(s.reason.as_deref(), Some(why));
    }
}

#[test]
fn benchmarks_shrink_with_power() {
    let mut c = quiet(7);
    let (geom, ch) = realize(&c).unwrap();
    let targets = sim_isac::sensing::targets_from(&c, &geom);
    let mut last = f64::INFINITY;
    for p in [1.0, 1e-4, 1e-8, 1e-12, 1e-16] {
        c.p_bs_max = p;
        let (b, _, _) = compute_benchmarks(&c, &ch, &targets).unwrap();
        assert!(b.r_max > 0.0 && b.r_max < last && b.crb_min > 0.0, "P {p}: {b:?}");
        last = b.r_max;
    }
    assert!(last < 1e-3);
}

#[test]
fn crb_benchmark_improves_with_more_elements() {
    let mut wins = 0;
    for seed in 1..=4 {
        let c = quiet(seed);
        let small = problem(&c).benchmarks.crb_min;
        let big = problem(&c.with_layers(2, 32)).benchmarks.crb_min;
        wins += (big <= small) as usize;
    }
    assert_eq!(wins, 4);
}

#[test]
fn infeasible_time_budget_is_rejected() {
    let mut c = quiet(1);
    c.tau_min = 0.34;
    assert!(matches!(available_time(&c), Err(LbcdError::EmptyFeasibleSet(_))));
}
