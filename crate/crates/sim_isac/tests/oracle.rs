use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sim_isac::channel::complex_gaussian;
use sim_isac::metasurface::{local_search, phase_gradient, PhaseProfile, Purpose};
use sim_isac::oracle::*;
use sim_isac::{CVec, C64};
use std::f64::consts::PI;

#[test]
fn exhaustive_search_examples() {
    let target = [0.0, PI];
    let mut calls = 0;
    let mut f = |p: &PhaseProfile| {
        calls += 1;
        p.phases[0].iter().zip(&target).map(|(t, a)| 1.0 - (t - a).cos()).sum::<f64>()
    };
    let (p, v) = exhaustive_phase_search(&[2], &[1], &mut f).unwrap();
    assert_eq!(calls, 4);
    assert_eq!(p.phases, vec![target.to_vec()]);
    assert!(v.abs() < 1e-12);

    let mut f = |p: &PhaseProfile| p.phases[0].iter().zip(&target).map(|(t, a)| 1.0 - (t - a).cos()).sum::<f64>();
    let start = PhaseProfile::from_phases(vec![vec![PI, 0.0]], Purpose::Comm);
    assert_eq!(local_search(&start, &[1], &mut f, 4, None).value, v);

    // Ties: every profile scores the same, the first in lexicographic order wins.
    let (p, _) = exhaustive_phase_search(&[1, 2], &[2, 1], &mut |_| 0.5).unwrap();
    assert_eq!(p.phases, vec![vec![0.0], vec![0.0, 0.0]]);
    assert_eq!(exhaustive_phase_search(&[11], &[2], &mut |_| 0.0).unwrap_err(), OracleError::BudgetExceeded(1 << 22));
}

#[test]
fn finite_differences() {
    let (d, _) = finite_difference(&|x| x * x, 3.0, None).unwrap();
    assert!((d - 6.0).abs() < 1e-8);
    assert!(finite_difference(&|x| if x > 1.0 { f64::NAN } else { x }, 1.0, None).is_err());
    let e = finite_difference_vec(&|x| vec![x.sin(), x.exp()], 0.3, None).unwrap();
    assert!((e.value[0] - 0.3f64.cos()).abs() < 1e-10 && (e.value[1] - 0.3f64.exp()).abs() < 1e-10);
}

#[test]
fn wirtinger_phase_gradient_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 8;
    let h: Vec<C64> = complex_gaussian(n, 1, &mut rng).iter().cloned().collect();
    let a = C64::new(0.7, -0.2);
    let f = |t: &[f64]| (a - t.iter().zip(&h).map(|(t, h)| h * C64::from_polar(1.0, *t)).sum::<C64>()).norm_sqr();
    for _ in 0..10 {
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let phi: Vec<C64> = theta.iter().map(|t| C64::from_polar(1.0, *t)).collect();
        let e = a - phi.iter().zip(&h).map(|(p, h)| h * p).sum::<C64>();
        let c: Vec<C64> = h.iter().map(|h| -e.conj() * h).collect();
        let g = phase_gradient(&c, &phi);
        let fd = fd_gradient(&f, &theta, None).unwrap();
        let dot: f64 = g.iter().zip(&fd).map(|(x, y)| x * y).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot / (norm(&g) * norm(&fd)) > 0.9999);
    }
}

#[test]
fn single_user_relaxation_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h: CVec = complex_gaussian(3, 1, &mut rng).column(0).into_owned();
    let p = SdrProblem { users: vec![h.clone()], eves: vec![], noise: 0.5, power: 2.0 };
    let out = sdr_toy(&p, &mut rng);
    assert!(out.converged);
    assert!(out.rank_one_share[0] >= 0.999, "{:?}", out.rank_one_share);
    assert!(out.candidates_feasible);
    let best = (1.0 + p.power * h.norm_squared() / p.noise).log2();
    assert!(out.value <= best + 1e-9 && out.value >= 0.999 * best, "{} vs {best}", out.value);
}
