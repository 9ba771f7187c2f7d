//! Command-line front end: schema validation with a coefficient echo,
//! allowable-factor sweeps, and Monte Carlo validation.
//!
//! Exit codes: 0 success, 1 analysis gate failed, 2 input error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swarm_init::config::ExperimentConfig;
use swarm_init::report;

#[derive(Parser)]
#[command(
    name = "swarm-init",
    version,
    about = "Sequential satellite-release design under chance-constrained distance limits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker thread count (overrides the SWARM_INIT_THREADS variable).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and print the derived model coefficients.
    Validate { config: PathBuf },
    /// Sweep the allowable variance factor over the configured (dt, N) grid
    /// and write a CSV table.
    Sweep {
        config: PathBuf,
        /// Output CSV path.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Run the configured Monte Carlo batch; exits 1 when the empirical
    /// failure rate exceeds the configured risk level.
    Montecarlo {
        config: PathBuf,
        /// Output directory for summary.json, trace.csv, topology.json.
        #[arg(long, default_value = "mc-out")]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ExperimentConfig::from_json_str(&text).map_err(|e| e.to_string())
}

fn init_threads(cli_threads: Option<usize>) {
    let n = cli_threads.or_else(|| {
        std::env::var("SWARM_INIT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let echo = report::validate_echo(&cfg).map_err(|e| e.to_string())?;
            print!("{echo}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, out } => {
            let cfg = load_config(&config)?;
            let csv = report::sweep_csv(&cfg).map_err(|e| e.to_string())?;
            fs::write(&out, csv).map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Montecarlo { config, out } => {
            let cfg = load_config(&config)?;
            let outputs = report::montecarlo_outputs(&cfg).map_err(|e| e.to_string())?;
            fs::create_dir_all(&out)
                .map_err(|e| format!("cannot create {}: {e}", out.display()))?;
            let write = |name: &str, body: &str| -> Result<(), String> {
                let path = out.join(name);
                fs::write(&path, body).map_err(|e| format!("cannot write {}: {e}", path.display()))
            };
            write("summary.json", &outputs.summary_json)?;
            write("trace.csv", &outputs.trace_csv)?;
            write("topology.json", &outputs.topology_json)?;
            println!("wrote {}", out.display());
            Ok(if outputs.gate_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
