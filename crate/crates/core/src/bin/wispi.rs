use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wispi::error::Error;
use wispi::harness::{self, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "wispi", version, about = "Discretized Bayesian inverse problems: refinement studies and rate fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write CSV, .dat and JSON artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Keep only this many graph modes in graph priors.
        #[arg(long)]
        spectral_cutoff: Option<usize>,
        /// Exit with status 3 when an acceptance check fails.
        #[arg(long)]
        check: bool,
    },
    /// Fit a log-log rate to two columns of a CSV file.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "h")]
        xcol: String,
        #[arg(long, default_value = "eps_C")]
        ycol: String,
    },
}

const CONFIG_ERROR: u8 = 1;
const COMPUTATION_ERROR: u8 = 2;
const ACCEPTANCE_FAILURE: u8 = 3;

fn status(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::Json(_) => CONFIG_ERROR,
        _ => COMPUTATION_ERROR,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            threads,
            spectral_cutoff,
            check,
        } => {
            let cfg = match ExperimentConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            let opts = RunOptions { threads, spectral_cutoff };
            let result = match harness::run(&cfg, &opts) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(status(&e));
                }
            };
            let dir = harness::output_dir(&cfg, out);
            let artifacts = match result.write(&dir, &cfg) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error writing artifacts: {e}");
                    return ExitCode::from(COMPUTATION_ERROR);
                }
            };
            let b = &result.bundle;
            for c in &b.checks {
                let tag = match (c.passed, c.required) {
                    (true, _) => "pass",
                    (false, true) => "FAIL",
                    (false, false) => "note",
                };
                println!("[{tag}] {}: {}", c.name, c.detail);
            }
            for e in &b.point_errors {
                eprintln!("point {}: {}", e.point, e.message);
            }
            println!(
                "{} finished in {:.1}s; wrote {}, {}, {}",
                b.experiment,
                result.elapsed_seconds,
                artifacts.csv.display(),
                artifacts.dat.display(),
                artifacts.json.display()
            );
            if !b.point_errors.is_empty() {
                return ExitCode::from(COMPUTATION_ERROR);
            }
            if check && !b.passed() {
                return ExitCode::from(ACCEPTANCE_FAILURE);
            }
            ExitCode::SUCCESS
        }
        Command::Fit { csv, xcol, ycol } => match harness::fit_csv(&csv, &xcol, &ycol) {
            Ok(fit) => {
                println!("{}", serde_json::to_string_pretty(&fit).expect("serializable"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(status(&e))
            }
        },
    }
}
