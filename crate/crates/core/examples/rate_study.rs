//! Batch refinement study through the experiment runner.
//!
//! Runs the FEM prior sweep, writes the CSV, `.dat` and JSON artifacts and
//! refits the rate from the CSV.
//!
//! ```text
//! cargo run --example rate_study -- [OUT_DIR]
//! ```

use wispi::harness::{self, fit_csv, ExperimentConfig, RunOptions};

fn main() -> wispi::error::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "results/example".into());
    let cfg: ExperimentConfig = serde_json::from_str(r#"{"experiment": "fem-prior", "h_list": [0.0625, 0.03125, 0.015625, 0.0078125]}"#)?;
    let run = harness::run(&cfg, &RunOptions::default())?;
    print!("{}", run.bundle.csv()?);
    for check in &run.bundle.checks {
        println!("[{}] {}: {}", if check.passed { "pass" } else { "FAIL" }, check.name, check.detail);
    }
    let files = run.write(std::path::Path::new(&out), &cfg)?;
    let fit = fit_csv(&files.csv, "h", "eps_C")?;
    println!("refit from {}: slope {:.4}, r^2 {:.4}", files.csv.display(), fit.slope, fit.r_squared);
    Ok(())
}
