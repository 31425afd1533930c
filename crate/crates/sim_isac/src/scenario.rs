//! Scenario configuration, array geometry, unit conversion and deterministic
//! random-stream derivation.
//!
//! All quantities inside the crate are SI linear units (W, J, s, m, rad).
//! Decibels appear only at I/O boundaries through [`dbm_to_watt`] and
//! friends.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// dBm → W.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// W → dBm.
pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Inter-layer links use only the deterministic spherical-wave kernel.
    LosOnly,
    /// Inter-layer links mix the kernel with i.i.d. CN(0,1) scattering.
    Rician,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative objective change.
    pub eps_obj: f64,
    /// Frobenius norm of the decision-variable change.
    pub eps_param: f64,
    /// Allowed excess of the estimated outage over `eps_out`.
    pub eps_outage: f64,
    /// Allowed relative excess of the CRB over its budget.
    pub eps_crb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySchedule {
    pub lambda0: f64,
    pub kappa_lambda: f64,
    pub lambda_max: f64,
}

/// Placement of the array stack and of the users, eavesdroppers and targets.
///
/// Users, eavesdroppers and targets are drawn in polar coordinates around the
/// centre of the output layer, inside the horizontal plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Distance between consecutive metasurface layers (and BS to layer 1),
    /// in wavelengths.
    pub layer_spacing: f64,
    pub link_distance_min: f64,
    pub link_distance_max: f64,
    /// Half-width of the angular sector in which nodes are placed (rad).
    pub angular_sector: f64,
    /// Minimum angular gap between any eavesdropper and any user (rad).
    pub min_eve_separation: f64,
    pub target_speed_max: f64,
    pub target_rcs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub carrier_frequency: f64,
    pub bs_antennas: usize,
    pub rf_chains: usize,
    pub layers: usize,
    pub elements_per_layer: Vec<usize>,
    pub phase_bits: Vec<u32>,
    pub users: usize,
    pub eavesdroppers: usize,
    pub targets: usize,
    pub noise_power: f64,
    pub p_bs_max: f64,
    pub energy_budget: f64,
    pub slot_duration: f64,
    pub switch_time: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub alpha: f64,
    pub eps_out: f64,
    /// Linear SINR floor per user.
    pub gamma_min: f64,
    /// Per-layer reconfiguration budget between sensing and comm profiles.
    pub delta_phi: Vec<f64>,
    pub path_loss_exponent: f64,
    pub reference_distance: f64,
    /// Rician factor per layer; entry `l` applies to the link feeding layer
    /// `l+1`, the first entry is unused because the BS link is deterministic.
    pub rician_k: Vec<f64>,
    pub channel_mode: ChannelMode,
    /// User CSI error radius as a fraction of ‖h_SIM→k‖.
    pub csi_error_bound: f64,
    /// Monte-Carlo draws used for evaluation (outage, reported rates).
    pub mc_samples: usize,
    /// Eavesdropper location draws used inside the optimizer.
    pub design_samples: usize,
    /// Secrecy-rate target R_k^min (bits/s/Hz).
    pub rate_min: f64,
    /// Bernstein approximation slack Δ_k.
    pub bernstein_slack: f64,
    /// Robust design (Bernstein margin and CSI inflation) or nominal design.
    pub robust: bool,
    pub eve_angle_spread: f64,
    pub eve_range_spread: f64,
    /// Number of probing snapshots across the sensing window.
    pub snapshots: usize,
    /// Γ_max = crb_budget_factor · CRB_min.
    pub crb_budget_factor: f64,
    /// Outer iteration cap t_max.
    pub max_iterations: usize,
    /// Iteration budget for the R_max / CRB_min benchmark solves.
    pub benchmark_iterations: usize,
    pub master_seed: u64,
    pub geometry: GeometryConfig,
    pub tolerances: Tolerances,
    pub penalty: PenaltySchedule,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        default_scenario()
    }
}

/// The paper's simulation setup with every unstated parameter filled in.
pub fn default_scenario() -> ScenarioConfig {
    let layers = 3;
    let n = 64;
    ScenarioConfig {
        carrier_frequency: 28e9,
        bs_antennas: 32,
        rf_chains: 8,
        layers,
        elements_per_layer: vec![n; layers],
        phase_bits: vec![3; layers],
        users: 4,
        eavesdroppers: 2,
        targets: 2,
        noise_power: dbm_to_watt(-104.0),
        p_bs_max: dbm_to_watt(30.0),
        energy_budget: db_to_linear(25.0),
        slot_duration: 10e-3,
        switch_time: 0.1e-3,
        tau_min: 0.05,
        tau_max: 0.9,
        alpha: 0.5,
        eps_out: 0.1,
        gamma_min: db_to_linear(3.0),
        delta_phi: vec![0.1 * n as f64; layers],
        path_loss_exponent: 2.5,
        reference_distance: 1.0,
        rician_k: vec![0.9; layers],
        channel_mode: ChannelMode::Rician,
        csi_error_bound: 0.05,
        mc_samples: 500,
        design_samples: 200,
        rate_min: 0.5,
        bernstein_slack: 0.0,
        robust: true,
        eve_angle_spread: 2f64.to_radians(),
        eve_range_spread: 1.0,
        snapshots: 64,
        crb_budget_factor: 2.0,
        max_iterations: 50,
        benchmark_iterations: 50,
        master_seed: 1,
        geometry: GeometryConfig {
            layer_spacing: 5.0,
            link_distance_min: 15.0,
            link_distance_max: 40.0,
            angular_sector: 60f64.to_radians(),
            min_eve_separation: 10f64.to_radians(),
            target_speed_max: 10.0,
            target_rcs: 1.0,
        },
        tolerances: Tolerances { eps_obj: 1e-4, eps_param: 1e-3, eps_outage: 0.05, eps_crb: 0.05 },
        penalty: PenaltySchedule { lambda0: 1.0, kappa_lambda: 1.5, lambda_max: 1e3 },
    }
}

impl ScenarioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn total_elements(&self) -> usize {
        self.elements_per_layer.iter().sum()
    }

    pub fn output_elements(&self) -> usize {
        *self.elements_per_layer.last().unwrap_or(&0)
    }

    pub fn switch_overhead(&self) -> f64 {
        2.0 * self.switch_time / self.slot_duration
    }

    /// Desk-scale shrink: M=8, R_RF=4, L=2, N_l=16, K=2, E=1, T=1.
    ///
    /// Per-layer lists are rebuilt from their first entry and δ_Φ keeps its
    /// ratio to N_l.
    pub fn desk_scale(&self) -> ScenarioConfig {
        let mut c = self.clone();
        c.bs_antennas = 8;
        c.rf_chains = 4;
        c.users = 2;
        c.eavesdroppers = 1;
        c.targets = 1;
        c.with_layers(2, 16)
    }

    /// Same scenario with `layers` layers of `n` elements each.
    pub fn with_layers(&self, layers: usize, n: usize) -> ScenarioConfig {
        self.with_layer_sizes(&vec![n; layers])
    }

    /// Same scenario with explicit per-layer sizes; per-layer lists are
    /// rebuilt from their first entry, δ_Φ keeps its ratio to N_l.
    pub fn with_layer_sizes(&self, sizes: &[usize]) -> ScenarioConfig {
        let mut c = self.clone();
        let ratio = match (self.delta_phi.first(), self.elements_per_layer.first()) {
            (Some(d), Some(&n)) if n > 0 => d / n as f64,
            _ => 0.1,
        };
        let bits = *self.phase_bits.first().unwrap_or(&3);
        let kappa = *self.rician_k.first().unwrap_or(&0.9);
        c.layers = sizes.len();
        c.elements_per_layer = sizes.to_vec();
        c.phase_bits = vec![bits; sizes.len()];
        c.rician_k = vec![kappa; sizes.len()];
        c.delta_phi = sizes.iter().map(|&n| ratio * n as f64).collect();
        c
    }

    pub fn with_phase_bits(&self, bits: u32) -> ScenarioConfig {
        let mut c = self.clone();
        c.phase_bits = vec![bits; self.layers];
        c
    }

    /// Checks every invariant; an empty list means the configuration is valid.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut bad = |field: &str, msg: String| out.push(ConfigIssue { field: field.to_string(), message: msg });
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !finite_pos(self.carrier_frequency) {
            bad("carrier_frequency", "must be a positive frequency in Hz".into());
        }
        if self.rf_chains < 1 {
            bad("rf_chains", "must be at least 1".into());
        }
        if self.bs_antennas < self.rf_chains {
            bad("bs_antennas", format!("must satisfy M >= R_RF (M = {}, R_RF = {})", self.bs_antennas, self.rf_chains));
        }
        if self.layers < 1 {
            bad("layers", "must be at least 1".into());
        }
        let per_layer: [(&str, usize); 4] = [
            ("elements_per_layer", self.elements_per_layer.len()),
            ("phase_bits", self.phase_bits.len()),
            ("delta_phi", self.delta_phi.len()),
            ("rician_k", self.rician_k.len()),
        ];
        for (name, len) in per_layer {
            if len != self.layers {
                bad(name, format!("needs one entry per layer ({} expected, {} given)", self.layers, len));
            }
        }
        if self.elements_per_layer.iter().any(|&n| n < 1) {
            bad("elements_per_layer", "every layer needs at least one element".into());
        }
        if self.phase_bits.iter().any(|&b| !(1..=16).contains(&b)) {
            bad("phase_bits", "each entry must lie in 1..=16".into());
        }
        if self.delta_phi.iter().any(|&d| !(d.is_finite() && d >= 0.0)) {
            bad("delta_phi", "entries must be finite and non-negative".into());
        }
        if self.rician_k.iter().any(|&k| !(0.0..=1.0).contains(&k)) {
            bad("rician_k", "entries must lie in [0, 1]".into());
        }
        if self.users < 1 {
            bad("users", "must be at least 1".into());
        }
        if !finite_pos(self.noise_power) {
            bad("noise_power", "must be positive (W)".into());
        }
        if !finite_pos(self.p_bs_max) {
            bad("p_bs_max", "must be positive (W)".into());
        }
        if !finite_pos(self.energy_budget) {
            bad("energy_budget", "must be positive (J)".into());
        }
        if !finite_pos(self.slot_duration) {
            bad("slot_duration", "must be positive (s)".into());
        }
        if !(self.switch_time.is_finite() && self.switch_time >= 0.0) {
            bad("switch_time", "must be non-negative (s)".into());
        }
        if !(0.0..=1.0).contains(&self.tau_min) {
            bad("tau_min", "must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.tau_max) {
            bad("tau_max", "must lie in [0, 1]".into());
        }
        if self.tau_min > self.tau_max {
            bad("tau_min", format!("must not exceed tau_max ({} > {})", self.tau_min, self.tau_max));
        }
        if 3.0 * self.tau_min + self.switch_overhead() > 1.0 {
            bad("tau_min", "three minimum phases plus switching overhead exceed the slot".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            bad("alpha", format!("must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.eps_out > 0.0 && self.eps_out < 0.5) {
            bad("eps_out", format!("must lie in (0, 0.5), got {}", self.eps_out));
        }
        if !(self.gamma_min.is_finite() && self.gamma_min >= 0.0) {
            bad("gamma_min", "must be non-negative".into());
        }
        if !finite_pos(self.path_loss_exponent) {
            bad("path_loss_exponent", "must be positive".into());
        }
        if !finite_pos(self.reference_distance) {
            bad("reference_distance", "must be positive (m)".into());
        }
        if !(self.csi_error_bound.is_finite() && self.csi_error_bound >= 0.0) {
            bad("csi_error_bound", "must be non-negative".into());
        }
        if self.mc_samples < 1 {
            bad("mc_samples", "must be at least 1".into());
        }
        if self.design_samples < 2 {
            bad("design_samples", "must be at least 2".into());
        }
        if !(self.rate_min.is_finite() && self.rate_min >= 0.0) {
            bad("rate_min", "must be non-negative".into());
        }
        if !self.bernstein_slack.is_finite() {
            bad("bernstein_slack", "must be finite".into());
        }
        if !(self.eve_angle_spread.is_finite() && self.eve_angle_spread >= 0.0) {
            bad("eve_angle_spread", "must be non-negative".into());
        }
        if !(self.eve_range_spread.is_finite() && self.eve_range_spread >= 0.0) {
            bad("eve_range_spread", "must be non-negative".into());
        }
        if self.snapshots < self.bs_antennas {
            bad("snapshots", format!("must be at least M = {} for orthogonal probing", self.bs_antennas));
        }
        if !(self.crb_budget_factor.is_finite() && self.crb_budget_factor >= 1.0) {
            bad("crb_budget_factor", "must be at least 1".into());
        }
        if self.benchmark_iterations < 1 {
            bad("benchmark_iterations", "must be at least 1".into());
        }
        let g = &self.geometry;
        if !finite_pos(g.layer_spacing) {
            bad("layer_spacing", "must be positive (wavelengths)".into());
        }
        if !(finite_pos(g.link_distance_min) && g.link_distance_min <= g.link_distance_max) {
            bad("link_distance_min", "must be positive and not exceed link_distance_max".into());
        }
        if !(g.angular_sector > 0.0 && g.angular_sector <= PI / 2.0) {
            bad("angular_sector", "must lie in (0, π/2]".into());
        }
        if !(g.min_eve_separation >= 0.0 && g.min_eve_separation < g.angular_sector) {
            bad("min_eve_separation", "must be non-negative and below angular_sector".into());
        }
        if !(g.target_speed_max.is_finite() && g.target_speed_max >= 0.0) {
            bad("target_speed_max", "must be non-negative".into());
        }
        if !finite_pos(g.target_rcs) {
            bad("target_rcs", "must be positive (m²)".into());
        }
        let t = &self.tolerances;
        for (name, v) in [("eps_obj", t.eps_obj), ("eps_param", t.eps_param), ("eps_outage", t.eps_outage), ("eps_crb", t.eps_crb)] {
            if !finite_pos(v) {
                bad(name, "tolerance must be positive".into());
            }
        }
        let p = &self.penalty;
        if !finite_pos(p.lambda0) {
            bad("lambda0", "must be positive".into());
        }
        if !(p.kappa_lambda > 1.0) || !p.kappa_lambda.is_finite() {
            bad("kappa_lambda", format!("must satisfy κ_λ > 1 for the penalty schedule to grow, got {}", p.kappa_lambda));
        }
        if !(p.lambda_max >= p.lambda0) {
            bad("lambda_max", "must be at least lambda0".into());
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ScenarioConfig always serializes")
    }

    /// Parses a configuration file, mapping syntax errors and unknown keys to
    /// line-precise diagnostics. Invariants are not checked here.
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, ConfigError> {
        toml::from_str::<ScenarioConfig>(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            ConfigError::Parse { line, message: e.message().to_string() }
        })
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// One violated invariant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {}: {message}", line.map(|l| l.to_string()).unwrap_or_else(|| "?".into()))]
    Parse { line: Option<usize>, message: String },
    #[error("invalid configuration: {}", issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect::<Vec<_>>().join("; "))]
    Invalid { issues: Vec<ConfigIssue> },
}

/// A diagnostic tied to a line of a configuration file.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {}: {}: {}", l, self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Parses and fully validates configuration text; an empty result means valid.
pub fn validate_config_text(text: &str) -> Vec<Diagnostic> {
    match ScenarioConfig::from_toml(text) {
        Err(ConfigError::Parse { line, message }) => vec![Diagnostic { line, field: "<syntax>".into(), message }],
        Err(ConfigError::Invalid { issues }) => issues
            .into_iter()
            .map(|i| Diagnostic { line: find_key_line(text, &i.field), field: i.field, message: i.message })
            .collect(),
        Ok(cfg) => cfg
            .validate()
            .into_iter()
            .map(|i| Diagnostic { line: find_key_line(text, &i.field), field: i.field, message: i.message })
            .collect(),
    }
}

fn find_key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key).map(|rest| rest.trim_start().starts_with('=')).unwrap_or(false)
    }).map(|i| i + 1)
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurposeTag {
    Channel,
    McOutage,
    Randomization,
    Noise,
}

impl PurposeTag {
    pub const ALL: [PurposeTag; 4] = [PurposeTag::Channel, PurposeTag::McOutage, PurposeTag::Randomization, PurposeTag::Noise];

    fn code(self) -> u64 {
        match self {
            PurposeTag::Channel => 1,
            PurposeTag::McOutage => 2,
            PurposeTag::Randomization => 3,
            PurposeTag::Noise => 4,
        }
    }
}

/// Stream index conventions used across the crate.
pub mod stream_index {
    /// Channel: node placement.
    pub const PLACEMENT: u64 = 0;
    /// Channel: scattering of the link feeding layer `l` uses `LAYER_BASE + l`.
    pub const LAYER_BASE: u64 = 16;
    /// McOutage: eavesdropper draws used inside the optimizer.
    pub const DESIGN: u64 = 0;
    /// McOutage: evaluation draws (eavesdroppers and user CSI errors).
    pub const EVALUATION: u64 = 1;
    /// Randomization: sensing-profile initialization.
    pub const SENSE_INIT: u64 = 0;
    /// Randomization: training-configuration search.
    pub const CE_SEARCH: u64 = 1;
}

/// splitmix64 finalizer; a bijection on u64.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded, platform-independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub derived_seed: u64,
    pub purpose_tag: PurposeTag,
}

impl RngStream {
    /// ChaCha8 generator seeded with `derived_seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derived_seed)
    }

    /// Child stream, derived the same way as a top-level stream.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream { derived_seed: mix_seed(self.derived_seed, self.purpose_tag, index), purpose_tag: self.purpose_tag }
    }
}

/// `splitmix64(splitmix64(seed) ⊕ (tag << 56) ⊕ index)`.
///
/// For a fixed seed the map (tag, index) → seed is injective for
/// `index < 2^56` because both the xor with a constant and splitmix64 are
/// bijections.
pub fn mix_seed(seed: u64, tag: PurposeTag, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ (tag.code() << 56) ^ (index & ((1u64 << 56) - 1)))
}

pub fn derive_stream(config: &ScenarioConfig, tag: PurposeTag, index: u64) -> RngStream {
    RngStream { derived_seed: mix_seed(config.master_seed, tag, index), purpose_tag: tag }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

pub type Point3 = [f64; 3];

/// Polar placement in the horizontal plane relative to the output-layer centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polar {
    pub theta: f64,
    pub range: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPlacement {
    pub theta: f64,
    pub range: f64,
    pub velocity: f64,
    pub rcs: f64,
    pub reflection_phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub wavelength: f64,
    pub bs_positions: Vec<Point3>,
    pub sim_layer_positions: Vec<Vec<Point3>>,
    pub output_center: Point3,
    pub users: Vec<Polar>,
    pub eavesdroppers: Vec<Polar>,
    pub targets: Vec<TargetPlacement>,
}

impl ArrayGeometry {
    /// Builds the BS ULA, the layer UPAs and random node placements drawn
    /// from the channel stream.
    pub fn build(config: &ScenarioConfig) -> ArrayGeometry {
        let lambda = config.wavelength();
        let bs_positions = ula_positions(config.bs_antennas, lambda / 2.0, 0.0);
        let spacing = config.geometry.layer_spacing * lambda;
        let sim_layer_positions: Vec<Vec<Point3>> = config
            .elements_per_layer
            .iter()
            .enumerate()
            .map(|(l, &n)| upa_positions(n, lambda / 2.0, spacing * (l + 1) as f64))
            .collect();
        let output_center = [spacing * config.layers as f64, 0.0, 0.0];
        let mut rng = derive_stream(config, PurposeTag::Channel, stream_index::PLACEMENT).rng();
        let g = &config.geometry;
        let draw_polar = |rng: &mut ChaCha8Rng| Polar {
            theta: rng.random_range(-g.angular_sector..=g.angular_sector),
            range: rng.random_range(g.link_distance_min..=g.link_distance_max),
        };
        let users: Vec<Polar> = (0..config.users).map(|_| draw_polar(&mut rng)).collect();
        let mut eavesdroppers = Vec::with_capacity(config.eavesdroppers);
        for _ in 0..config.eavesdroppers {
            let mut p = draw_polar(&mut rng);
            for _ in 0..1000 {
                if users.iter().all(|u| (u.theta - p.theta).abs() >= g.min_eve_separation) {
                    break;
                }
                p = draw_polar(&mut rng);
            }
            eavesdroppers.push(p);
        }
        let targets = (0..config.targets)
            .map(|_| {
                let p = draw_polar(&mut rng);
                TargetPlacement {
                    theta: p.theta,
                    range: p.range,
                    velocity: if g.target_speed_max > 0.0 {
                        rng.random_range(-g.target_speed_max..=g.target_speed_max)
                    } else {
                        0.0
                    },
                    rcs: g.target_rcs,
                    reflection_phase: rng.random_range(0.0..2.0 * PI),
                }
            })
            .collect();
        ArrayGeometry { wavelength: lambda, bs_positions, sim_layer_positions, output_center, users, eavesdroppers, targets }
    }

    pub fn polar_to_point(&self, p: Polar) -> Point3 {
        let c = self.output_center;
        [c[0] + p.range * p.theta.cos(), c[1] + p.range * p.theta.sin(), c[2]]
    }
}

/// Uniform linear array along y at height 0, centred at x.
pub fn ula_positions(n: usize, spacing: f64, x: f64) -> Vec<Point3> {
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| [x, (i as f64 - mid) * spacing, 0.0]).collect()
}

/// Most-square factorization `rows × cols` with `rows <= cols`.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && n % rows != 0 {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, n / rows)
}

/// Planar array in the y-z plane at depth x, rows along z, row-major order.
pub fn upa_positions(n: usize, spacing: f64, x: f64) -> Vec<Point3> {
    let (rows, cols) = grid_shape(n);
    let my = (cols as f64 - 1.0) / 2.0;
    let mz = (rows as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..cols {
            out.push([x, (c as f64 - my) * spacing, (r as f64 - mz) * spacing]);
        }
    }
    out
}

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_setup() {
        let c = default_scenario();
        assert_eq!(c.bs_antennas, 32);
        assert_eq!(c.rf_chains, 8);
        assert_eq!(c.total_elements(), 192);
        assert_eq!(c.users, 4);
        assert_eq!(c.eavesdroppers, 2);
        assert_eq!(c.carrier_frequency, 28e9);
        assert!((c.p_bs_max - 1.0).abs() < 1e-12);
        assert!(c.is_valid(), "{:?}", c.validate());
    }

    #[test]
    fn desk_scale_shrinks() {
        let d = default_scenario().desk_scale();
        assert_eq!((d.bs_antennas, d.rf_chains, d.layers, d.users, d.eavesdroppers, d.targets), (8, 4, 2, 2, 1, 1));
        assert_eq!(d.elements_per_layer, vec![16, 16]);
        assert_eq!(d.delta_phi, vec![1.6, 1.6]);
        assert!(d.is_valid(), "{:?}", d.validate());
    }

    #[test]
    fn dbm_values() {
        assert_eq!(dbm_to_watt(30.0), 1.0);
        assert!((dbm_to_watt(0.0) - 1e-3).abs() < 1e-18);
        assert!((dbm_to_watt(-104.0) / 3.981_071_705_534_97e-14 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape(16), (4, 4));
        assert_eq!(grid_shape(32), (4, 8));
        assert_eq!(grid_shape(48), (6, 8));
        assert_eq!(grid_shape(192), (12, 16));
        assert_eq!(grid_shape(7), (1, 7));
    }

    #[test]
    fn kappa_lambda_condition() {
        let mut c = default_scenario();
        c.penalty.kappa_lambda = 1.0;
        let issues = c.validate();
        assert!(issues.iter().any(|i| i.field == "kappa_lambda" && i.message.contains("κ_λ > 1")));
    }
}
