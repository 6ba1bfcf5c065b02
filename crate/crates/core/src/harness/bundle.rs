use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::SlopeWindow;
use crate::error::Result;
use crate::rate::{fit_rate, RateFit};

/// One pass/fail verdict in a summary.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Only required checks decide the overall verdict.
    pub required: bool,
    pub detail: String,
}

/// A sweep point that failed; the run continues without it.
#[derive(Debug, Clone, Serialize)]
pub struct PointError {
    pub point: String,
    pub message: String,
}

/// CSV rows plus everything that goes into the JSON summary.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub experiment: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub slopes: BTreeMap<String, RateFit>,
    pub checks: Vec<Check>,
    pub point_errors: Vec<PointError>,
    pub details: Value,
}

/// Paths written by [`ResultBundle::write`].
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub dat: PathBuf,
    pub json: PathBuf,
}

/// Shortest round-trip decimal form; `NaN` for missing values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

impl ResultBundle {
    pub fn new(experiment: &'static str, header: Vec<&'static str>) -> Self {
        Self {
            experiment,
            header,
            rows: Vec::new(),
            slopes: BTreeMap::new(),
            checks: Vec::new(),
            point_errors: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.required).all(|c| c.passed)
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            required: true,
            detail: detail.into(),
        });
    }

    pub fn note(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            required: false,
            detail: detail.into(),
        });
    }

    pub fn point_error(&mut self, point: impl Into<String>, err: impl ToString) {
        self.point_errors.push(PointError {
            point: point.into(),
            message: err.to_string(),
        });
    }

    /// Fits a rate over the finite points and records a check against `window`.
    pub fn fit_check(&mut self, name: &str, xs: &[f64], ys: &[f64], window: Option<&SlopeWindow>) {
        let (fx, fy): (Vec<f64>, Vec<f64>) = xs.iter().zip(ys).filter(|(_, y)| y.is_finite()).map(|(x, y)| (*x, *y)).unzip();
        match fit_rate(&fx, &fy) {
            Ok(fit) => {
                if let Some(w) = window {
                    let ok = w.contains(fit.slope, fit.r_squared);
                    let detail = format!(
                        "slope {:.4} (window [{}, {}]), r^2 {:.4} (min {})",
                        fit.slope, w.min, w.max, fit.r_squared, w.min_r_squared
                    );
                    self.check(format!("{name} slope"), ok, detail);
                }
                self.slopes.insert(name.to_string(), fit);
            }
            Err(e) => {
                if window.is_some() {
                    self.check(format!("{name} slope"), false, e.to_string());
                }
            }
        }
    }

    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Whitespace-separated copy with a commented header, for gnuplot.
    pub fn dat(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.header.join(" "));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn summary(&self, config: &impl Serialize, metadata: Value) -> Value {
        json!({
            "experiment": self.experiment,
            "passed": self.passed(),
            "checks": self.checks,
            "slopes": self.slopes,
            "point_errors": self.point_errors,
            "columns": self.header,
            "rows": self.rows.len(),
            "details": self.details,
            "config": config,
            "metadata": metadata,
        })
    }

    /// Writes `<experiment>.csv`, `.dat` and `.json` into `dir`.
    pub fn write(&self, dir: &Path, config: &impl Serialize, metadata: Value) -> Result<Artifacts> {
        std::fs::create_dir_all(dir)?;
        let base = dir.join(self.experiment);
        let artifacts = Artifacts {
            csv: base.with_extension("csv"),
            dat: base.with_extension("dat"),
            json: base.with_extension("json"),
        };
        std::fs::write(&artifacts.csv, self.csv()?)?;
        std::fs::write(&artifacts.dat, self.dat())?;
        let summary = serde_json::to_string_pretty(&self.summary(config, metadata))?;
        std::fs::write(&artifacts.json, summary + "\n")?;
        Ok(artifacts)
    }
}

/// `true` when every step strictly decreases.
pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_dat_layouts() {
        let mut b = ResultBundle::new("demo", vec!["h", "eps"]);
        b.rows.push(vec![num(0.5), num(0.25)]);
        b.rows.push(vec![num(0.25), num(f64::NAN)]);
        assert_eq!(b.csv().unwrap(), "h,eps\n0.5,0.25\n0.25,NaN\n");
        assert_eq!(b.dat(), "# h eps\n0.5 0.25\n0.25 NaN\n");
    }

    #[test]
    fn fit_check_skips_missing_points() {
        let mut b = ResultBundle::new("demo", vec![]);
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys = [1.0, 4.0, f64::NAN, 64.0];
        b.fit_check("y", &xs, &ys, Some(&SlopeWindow::new(1.9, 2.1)));
        assert!(b.passed());
        assert!((b.slopes["y"].slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn notes_do_not_fail_a_run() {
        let mut b = ResultBundle::new("demo", vec![]);
        b.note("informational", false, "");
        assert!(b.passed());
        b.check("required", false, "");
        assert!(!b.passed());
    }

    #[test]
    fn decreasing() {
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0, 1.0]));
    }
}
