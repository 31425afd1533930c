use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sim_isac::channel::*;
use sim_isac::scenario::*;
use sim_isac::C64;
use std::collections::HashSet;
use std::f64::consts::PI;

#[test]
fn default_setup_values() {
    let c = default_scenario();
    assert_eq!((c.bs_antennas, c.rf_chains), (32, 8));
    assert_eq!(c.total_elements(), 192);
    assert!(c.validate().is_empty());
    let d = c.desk_scale();
    assert_eq!((d.bs_antennas, d.rf_chains, d.layers, d.users, d.eavesdroppers, d.targets), (8, 4, 2, 2, 1, 1));
    assert_eq!(d.elements_per_layer, vec![16, 16]);
    assert!(d.validate().is_empty());
}

#[test]
fn unit_conversions() {
    assert!((dbm_to_watt(30.0) - 1.0).abs() < 1e-15);
    assert!((dbm_to_watt(0.0) - 1e-3).abs() < 1e-18);
    assert!((dbm_to_watt(-104.0) / 3.981_071_705_534_97e-14 - 1.0).abs() < 1e-12);
}

#[test]
fn streams_are_deterministic_and_collision_free() {
    let c = default_scenario();
    let a = derive_stream(&c, PurposeTag::Channel, 0);
    assert_eq!(a, derive_stream(&c, PurposeTag::Channel, 0));
    assert_ne!(a.derived_seed, derive_stream(&c, PurposeTag::Channel, 1).derived_seed);
    // 4 tags × 2^14 indices = 2^16 (tag, index) pairs.
    let mut seen = HashSet::new();
    for tag in PurposeTag::ALL {
        for i in 0..(1u64 << 14) {
            assert!(seen.insert(derive_stream(&c, tag, i).derived_seed));
        }
    }
    assert_eq!(seen.len(), 1 << 16);
}

#[test]
fn config_text_round_trip() {
    let c = default_scenario().desk_scale();
    assert_eq!(ScenarioConfig::from_toml(&c.to_toml()).unwrap(), c);
    let d = validate_config_text("bogus_key = 1\n");
    assert!(!d.is_empty());
}

#[test]
fn equal_seeds_give_identical_channels() {
    let c = default_scenario().desk_scale();
    let (_, a) = realize(&c).unwrap();
    let (_, b) = realize(&c).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    let (_, other) = realize(&ScenarioConfig { master_seed: 2, ..c }).unwrap();
    assert_ne!(a.to_text(), other.to_text());
}

#[test]
fn near_field_kernel() {
    let lambda = 0.0107;
    let rx = [[0.05, 0.0, 0.0], [0.05, 0.004, 0.001]];
    let tx = [[0.0, 0.0, 0.0], [0.0, 0.005, 0.0]];
    let h = near_field_matrix(&rx, &tx, lambda).unwrap();
    for (n, p) in rx.iter().enumerate() {
        for (m, q) in tx.iter().enumerate() {
            let r = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            let want = C64::from_polar(lambda / (4.0 * PI * r), -2.0 * PI * r / lambda);
            assert!((h[(n, m)] - want).norm() < 1e-12);
        }
    }
    // Doubling distances halves magnitudes.
    let far = near_field_matrix(&[[0.1, 0.0, 0.0]], &[[0.0; 3]], lambda).unwrap();
    let near = near_field_matrix(&[[0.05, 0.0, 0.0]], &[[0.0; 3]], lambda).unwrap();
    assert!((far[(0, 0)].norm() * 2.0 - near[(0, 0)].norm()).abs() < 1e-15);
}

#[test]
fn inter_layer_modes() {
    let c = default_scenario().desk_scale();
    let geom = ArrayGeometry::build(&c);
    let s = derive_stream(&c, PurposeTag::Channel, stream_index::LAYER_BASE + 1);
    let los = inter_layer(&geom, 1, c.wavelength(), 1.0, &s, ChannelMode::LosOnly).unwrap();
    assert_eq!(inter_layer(&geom, 1, c.wavelength(), 1.0, &s, ChannelMode::Rician).unwrap(), los);
    let a = inter_layer(&geom, 1, c.wavelength(), 0.9, &s, ChannelMode::Rician).unwrap();
    assert_eq!(a, inter_layer(&geom, 1, c.wavelength(), 0.9, &s, ChannelMode::Rician).unwrap());
    // κ = 0: pure scattering with unit per-entry variance.
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..40 {
        let s = derive_stream(&c, PurposeTag::Channel, 1000 + i);
        let h = inter_layer(&geom, 1, c.wavelength(), 0.0, &s, ChannelMode::Rician).unwrap();
        sum += h.iter().map(|z| z.norm_sqr()).sum::<f64>();
        n += h.len();
    }
    assert!(n >= 10_000);
    assert!((sum / n as f64 - 1.0).abs() < 0.05, "{}", sum / n as f64);
}

#[test]
fn path_loss_value() {
    assert!((path_loss(10.0, 1.0, 2.5) - 316.227_766_016_837_9).abs() < 1e-9);
}

#[test]
fn csi_errors_fill_the_ball_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (dim, bound, draws) = (3usize, 0.1, 10_000);
    let mut norms: Vec<f64> = (0..draws).map(|_| sample_csi_error(dim, bound, &mut rng).norm()).collect();
    assert!(norms.iter().all(|&r| r <= bound));
    norms.sort_by(f64::total_cmp);
    // Radius law of a uniform ball in C^dim = R^(2·dim): F(r) = (r/b)^(2·dim).
    let ks = norms
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let f = (r / bound).powi(2 * dim as i32);
            (f - i as f64 / draws as f64).abs().max((f - (i + 1) as f64 / draws as f64).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS {ks}");
    let mut r1 = ChaCha8Rng::seed_from_u64(8);
    let mut r2 = ChaCha8Rng::seed_from_u64(8);
    assert_eq!(sample_csi_error(4, 0.2, &mut r1), sample_csi_error(4, 0.2, &mut r2));
}

#[test]
fn eve_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let nominal = Polar { theta: 0.4, range: 25.0 };
    assert_eq!(sample_eve_uncertainty(nominal, 0.0, 0.0, &mut rng), nominal);
    let (sa, sr, n) = (0.05, 1.0, 10_000);
    let mut pairs = Vec::with_capacity(n);
    let (mut mt, mut mr) = (0.0, 0.0);
    for _ in 0..n {
        let a = sample_eve_uncertainty(nominal, sa, sr, &mut rng);
        let b = sample_eve_uncertainty(nominal, sa, sr, &mut rng);
        mt += a.theta - nominal.theta;
        mr += a.range - nominal.range;
        pairs.push((a.theta - nominal.theta, b.theta - nominal.theta));
    }
    // Uniform on [−s, s] has standard deviation s/√3.
    let se = |s: f64| s / 3f64.sqrt() / (n as f64).sqrt();
    assert!((mt / n as f64).abs() < 3.0 * se(sa));
    assert!((mr / n as f64).abs() < 3.0 * se(sr));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    assert!((cov / (vx * vy).sqrt()).abs() < 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dbm_round_trip(x in -200.0f64..100.0) {
        prop_assert!((watt_to_dbm(dbm_to_watt(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
        let w = dbm_to_watt(x);
        prop_assert!((dbm_to_watt(watt_to_dbm(w)) / w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn configs_from_invariant_ranges_validate(
        m in 1usize..16, extra in 0usize..4, layers in 1usize..4, alpha in 0.0f64..=1.0, eps in 0.01f64..0.49,
    ) {
        let mut c = default_scenario().with_layers(layers, 8);
        c.rf_chains = m;
        c.bs_antennas = m + extra;
        c.users = c.users.min(m);
        c.alpha = alpha;
        c.eps_out = eps;
        prop_assert!(c.validate().is_empty(), "{:?}", c.validate());
        let mut bad = c.clone();
        bad.bs_antennas = m.saturating_sub(1);
        prop_assert!(!bad.validate().is_empty());
    }
}
