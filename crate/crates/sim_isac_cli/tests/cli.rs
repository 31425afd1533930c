use sim_isac::scenario::default_scenario;
use sim_isac_cli::scenarios::SCENARIOS;
use sim_isac_cli::{replay, run, validate_file, Manifest, RunRequest, MANIFEST};
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_sim-isac");

/// Desk scale with short runs so the sweeps finish quickly.
fn light_config(dir: &Path) -> std::path::PathBuf {
    let mut c = default_scenario().desk_scale();
    c.max_iterations = 2;
    c.mc_samples = 40;
    c.design_samples = 20;
    let path = dir.join("light.toml");
    std::fs::write(&path, c.to_toml()).unwrap();
    path
}

fn request(dir: &Path, scenario: &str, out: &str) -> RunRequest {
    RunRequest {
        scenario: scenario.into(),
        config: Some(light_config(dir)),
        seed: Some(11),
        out: dir.join(out),
        jobs: 1,
        desk_scale: false,
    }
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn alpha_sweep_schema() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&request(dir.path(), "alpha_sweep", "a")).unwrap();
    assert_eq!(m.files, vec!["alpha_sweep.csv"]);
    let text = read(&dir.path().join("a"), "alpha_sweep.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,sum_secrecy,inv_norm_crb,utility");
    assert_eq!(lines.len(), 12);
    assert!(lines[1].starts_with("0.00000000e0,"));
    assert!(lines[11].starts_with("1.00000000e0,"));
    assert!(!text.contains("NaN") && !text.contains("inf"));
}

#[test]
fn same_seed_gives_identical_files_and_replay_matches() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&request(dir.path(), "convergence_trace", "a")).unwrap();
    let mut req = request(dir.path(), "convergence_trace", "b");
    req.jobs = 2;
    run(&req).unwrap();
    let (da, db, dr) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("r"));
    for f in &a.files {
        assert_eq!(read(&da, f), read(&db, f), "{f}");
    }
    let r = replay(&da.join(MANIFEST), &dr, 1).unwrap();
    assert_eq!(r.files, a.files);
    for f in &a.files {
        assert_eq!(read(&da, f), read(&dr, f), "{f}");
    }
    let m: Manifest = serde_json::from_str(&read(&da, MANIFEST)).unwrap();
    assert_eq!(m.seed, 11);
    assert_eq!(m.scenario, "convergence_trace");
}

#[test]
fn every_scenario_name_is_known() {
    assert_eq!(SCENARIOS.len(), 9);
    let dir = tempfile::tempdir().unwrap();
    let err = run(&request(dir.path(), "no_such_sweep", "x")).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| Command::new(BIN).args(args).output().unwrap().status.code();
    assert_eq!(status(&["--scenario", "bogus", "--out", dir.path().to_str().unwrap()]), Some(3));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "alpha = \"high\"\n").unwrap();
    assert_eq!(status(&["--scenario", "alpha_sweep", "--config", bad.to_str().unwrap()]), Some(2));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = light_config(dir.path());
    let out = blocker.join("sub");
    let code = status(&["--scenario", "convergence_trace", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, Some(4));
}

#[test]
fn validate_reports_fields_and_lines() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, default_scenario().to_toml()).unwrap();
    assert!(validate_file(&good).is_empty());
    let out = Command::new(BIN).args(["validate", good.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    let text = default_scenario().to_toml().replace("alpha = 0.5", "alpha = 1.5");
    let path = dir.path().join("alpha.toml");
    std::fs::write(&path, &text).unwrap();
    let d = validate_file(&path);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].field, "alpha");
    assert!(d[0].message.contains("[0, 1]"));
    let line = text.lines().position(|l| l.starts_with("alpha =")).unwrap() + 1;
    assert_eq!(d[0].line, Some(line));
    let out = Command::new(BIN).args(["validate", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let text = default_scenario().to_toml().replace("kappa_lambda = 1.5", "kappa_lambda = 1.0");
    assert!(text.contains("kappa_lambda = 1.0"));
    let path = dir.path().join("kappa.toml");
    std::fs::write(&path, &text).unwrap();
    let d = validate_file(&path);
    assert!(d.iter().any(|x| x.field == "kappa_lambda" && x.message.contains("κ_λ > 1")), "{d:?}");
}

#[test]
fn shipped_configs_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for f in ["default.toml", "desk.toml"] {
        assert!(validate_file(&root.join(f)).is_empty(), "{f}");
    }
}
