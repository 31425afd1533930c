use clap::{Parser, Subcommand};
use sim_isac::scenario::default_scenario;
use sim_isac_cli::{render_diagnostics, replay, run, validate_file, RunRequest};
use std::path::PathBuf;
use std::process::ExitCode;

/// Runs the stacked-metasurface ISAC figure sweeps and writes plot-ready CSVs.
#[derive(Parser, Debug)]
#[command(name = "sim-isac", version, args_conflicts_with_subcommands = true)]
struct Args {
    #[command(subcommand)]
    command: Option<Command>,
    /// Scenario to run (power_sweep, alpha_sweep, uncertainty_sweep,
    /// layer_sweep, quantization_sweep, convergence_trace,
    /// time_allocation_sweep, eve_sweep, crb_error_report).
    #[arg(long)]
    scenario: Option<String>,
    /// Scenario configuration file (TOML); built-in defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Parallel sweep width (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Shrink to M=8, R_RF=4, L=2, N_l=16, K=2, E=1, T=1.
    #[arg(long)]
    desk_scale: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a configuration file and print line-tagged diagnostics.
    Validate { path: PathBuf },
    /// Re-run the scenario recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value = "replay")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Print the default configuration file.
    DefaultConfig {
        #[arg(long)]
        desk_scale: bool,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Some(Command::Validate { path }) => {
            let diags = validate_file(&path);
            if diags.is_empty() {
                println!("{}: valid", path.display());
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", render_diagnostics(&path, &diags));
            return ExitCode::from(2);
        }
        Some(Command::DefaultConfig { desk_scale }) => {
            let c = default_scenario();
            print!("{}", if desk_scale { c.desk_scale() } else { c }.to_toml());
            return ExitCode::SUCCESS;
        }
        Some(Command::Replay { manifest, out, jobs }) => replay(&manifest, &out, jobs),
        None => {
            let Some(scenario) = args.scenario else {
                eprintln!("sim-isac: --scenario is required (see --help)");
                return ExitCode::from(3);
            };
            run(&RunRequest {
                scenario,
                config: args.config,
                seed: args.seed,
                out: args.out,
                jobs: args.jobs,
                desk_scale: args.desk_scale,
            })
        }
    };
    match result {
        Ok(m) => {
            println!("{}: wrote {} in {:.1} s", m.scenario, m.files.join(", "), m.wall_time_s);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sim-isac: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
