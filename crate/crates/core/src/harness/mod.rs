//! Batch experiment runner: refinement sweeps, rate fits and CSV/JSON artifacts.

mod bundle;
pub mod config;
mod ensemble;
mod fem;
mod graph;
mod map;

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;

pub use bundle::{num, Artifacts, Check, PointError, ResultBundle};
pub use config::{Experiment, ExperimentConfig, SlopeWindow};
pub use fem::{COV_AGREEMENT, MEAN_AGREEMENT};
pub use graph::paired_eigenvalue_errors;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Overrides the graph prior mode cutoff.
    pub spectral_cutoff: Option<usize>,
}

/// A finished run and its timing.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub bundle: ResultBundle,
    pub elapsed_seconds: f64,
    pub threads: usize,
}

impl RunOutput {
    pub fn metadata(&self) -> serde_json::Value {
        let finished = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        json!({
            "version": env!("CARGO_PKG_VERSION"),
            "threads": self.threads,
            "elapsed_seconds": self.elapsed_seconds,
            "finished_unix": finished,
        })
    }

    /// Writes the CSV, `.dat` and JSON summary into `dir`.
    pub fn write(&self, dir: &std::path::Path, config: &ExperimentConfig) -> Result<Artifacts> {
        self.bundle.write(dir, config, self.metadata())
    }
}

fn dispatch(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultBundle> {
    match &cfg.experiment {
        Experiment::FemPrior(c) => fem::fem_prior(c),
        Experiment::FemForward(c) => fem::fem_forward_experiment(c),
        Experiment::FemPosterior(c) => fem::fem_posterior(c),
        Experiment::GraphPrior(c) => graph::graph_prior(c, opts.spectral_cutoff),
        Experiment::GraphPosterior(c) => graph::graph_posterior(c, opts.spectral_cutoff),
        Experiment::Eki(c) => ensemble::eki(c),
        Experiment::EffectiveDim(c) => fem::effective_dim(c),
        Experiment::MapLinear(c) => map::map_linear(c),
        Experiment::MapBurgers(c) => map::map_refinement(c),
    }
}

/// Validates `cfg` and runs it. Results are ordered by sweep point and do not
/// depend on the thread count.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    if opts.threads == Some(0) {
        return Err(Error::config("threads", "need at least one thread"));
    }
    let start = Instant::now();
    let (bundle, threads) = match opts.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            (pool.install(|| dispatch(cfg, opts))?, t)
        }
        None => (dispatch(cfg, opts)?, rayon::current_num_threads()),
    };
    Ok(RunOutput {
        bundle,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        threads,
    })
}

/// Output directory: the explicit override, else the config's, else `results`.
pub fn output_dir(cfg: &ExperimentConfig, overridden: Option<PathBuf>) -> PathBuf {
    overridden
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Reads one column pair from a CSV file and fits a rate, skipping rows whose
/// values are missing (`NaN`).
pub fn fit_csv(path: &std::path::Path, xcol: &str, ycol: &str) -> Result<crate::rate::RateFit> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str, field: &'static str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config(field, format!("no column `{name}` in {}", path.display())))
    };
    let (xi, yi) = (find(xcol, "xcol")?, find(ycol, "ycol")?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Fit(format!("row {}: {e}", line + 2)))
        };
        let (x, y) = (parse(xi)?, parse(yi)?);
        if x.is_nan() || y.is_nan() {
            continue;
        }
        xs.push(x);
        ys.push(y);
    }
    crate::rate::fit_rate(&xs, &ys)
}
