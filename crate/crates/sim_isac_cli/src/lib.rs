//! Scenario runner behind the `sim-isac` binary: loads and validates a
//! configuration, runs one figure sweep on a worker pool, and writes its
//! CSV tables plus a JSON manifest that can replay the run.

pub mod scenarios;
pub mod table;

use scenarios::{run_named, RunError, SCENARIOS};
use serde::{Deserialize, Serialize};
use sim_isac::scenario::{default_scenario, validate_config_text, Diagnostic, ScenarioConfig};
use std::path::{Path, PathBuf};
use std::time::Instant;
use table::Table;
use thiserror::Error;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Scenario(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> CliError {
        match e {
            RunError::UnknownScenario(_) => CliError::Scenario(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunRequest {
    pub scenario: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    pub desk_scale: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub seed: u64,
    /// Multi-seed sweeps use `seed`, `seed + 1`, ...
    pub seed_rule: String,
    pub desk_scale: bool,
    pub jobs: usize,
    /// The exact configuration the run used, in the config file format.
    pub config: String,
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

/// Configuration a request resolves to, validated.
pub fn resolve_config(req: &RunRequest) -> Result<ScenarioConfig, CliError> {
    let mut c = match &req.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let diags = validate_config_text(&text);
            if !diags.is_empty() {
                return Err(CliError::Config(render_diagnostics(path, &diags)));
            }
            ScenarioConfig::from_toml(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => default_scenario(),
    };
    if req.desk_scale {
        c = c.desk_scale();
    }
    if let Some(s) = req.seed {
        c.master_seed = s;
    }
    let issues = c.validate();
    if !issues.is_empty() {
        let msg: Vec<String> = issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
        return Err(CliError::Config(msg.join("; ")));
    }
    Ok(c)
}

pub fn render_diagnostics(path: &Path, diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("{}: {d}", path.display())).collect::<Vec<_>>().join("\n")
}

/// Validates a configuration file; an empty list means valid.
pub fn validate_file(path: &Path) -> Vec<Diagnostic> {
    match std::fs::read_to_string(path) {
        Ok(text) => validate_config_text(&text),
        Err(e) => vec![Diagnostic { line: None, field: "<file>".into(), message: e.to_string() }],
    }
}

/// Runs `scenario` on an already resolved configuration and writes the
/// outputs to `out`.
pub fn execute(scenario: &str, c: &ScenarioConfig, out: &Path, jobs: usize, desk_scale: bool) -> Result<Manifest, CliError> {
    if !SCENARIOS.contains(&scenario) {
        return Err(CliError::Scenario(format!("unknown scenario `{scenario}`; known: {}", SCENARIOS.join(", "))));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let start = Instant::now();
    let tables = pool.install(|| run_named(scenario, c))?;
    let files = write_tables(out, &tables)?;
    let manifest = Manifest {
        tool: "sim-isac".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: scenario.into(),
        seed: c.master_seed,
        seed_rule: "seed + i for the i-th seed of a multi-seed sweep".into(),
        desk_scale,
        jobs,
        config: c.to_toml(),
        files,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&out.join(MANIFEST), &json)?;
    Ok(manifest)
}

/// Renders every table before writing any, so a bad value leaves no
/// partial output behind.
pub fn write_tables(out: &Path, tables: &[Table]) -> Result<Vec<String>, CliError> {
    let rendered: Vec<(String, String)> = tables
        .iter()
        .map(|t| t.render().map(|s| (t.name.clone(), s)))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for (name, text) in &rendered {
        write(&out.join(name), text)?;
    }
    Ok(rendered.into_iter().map(|(n, _)| n).collect())
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn run(req: &RunRequest) -> Result<Manifest, CliError> {
    if !SCENARIOS.contains(&req.scenario.as_str()) {
        return Err(CliError::Scenario(format!("unknown scenario `{}`; known: {}", req.scenario, SCENARIOS.join(", "))));
    }
    let c = resolve_config(req)?;
    execute(&req.scenario, &c, &req.out, req.jobs, req.desk_scale)
}

/// Re-runs the scenario recorded in a manifest into `out`.
pub fn replay(manifest: &Path, out: &Path, jobs: usize) -> Result<Manifest, CliError> {
    let text = std::fs::read_to_string(manifest).map_err(|e| CliError::Config(format!("{}: {e}", manifest.display())))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", manifest.display())))?;
    let diags = validate_config_text(&m.config);
    if !diags.is_empty() {
        return Err(CliError::Config(render_diagnostics(manifest, &diags)));
    }
    let c = ScenarioConfig::from_toml(&m.config).map_err(|e| CliError::Config(e.to_string()))?;
    execute(&m.scenario, &c, out, jobs, m.desk_scale)
}
