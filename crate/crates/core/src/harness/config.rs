use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{integer_reciprocal, CoefficientFn};
use crate::graph::SamplingMode;
use crate::map::MapProblem;

/// Inclusive acceptance window for a fitted log-log slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeWindow {
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub min_r_squared: f64,
}

impl SlopeWindow {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max, min_r_squared: 0.0 }
    }

    pub fn contains(&self, slope: f64, r_squared: f64) -> bool {
        (self.min..=self.max).contains(&slope) && r_squared >= self.min_r_squared
    }
}

/// An experiment plus where its artifacts go. In JSON the experiment fields
/// and `output_dir` share one object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl<'de> Deserialize<'de> for ExperimentConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut v = serde_json::Value::deserialize(d)?;
        let obj = v.as_object_mut().ok_or_else(|| D::Error::custom("config must be a JSON object"))?;
        let output_dir = match obj.remove("output_dir") {
            None | Some(serde_json::Value::Null) => None,
            Some(p) => Some(serde_json::from_value(p).map_err(D::Error::custom)?),
        };
        let experiment = serde_json::from_value(v).map_err(D::Error::custom)?;
        Ok(Self { experiment, output_dir })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Experiment {
    FemPrior(FemPrior),
    FemForward(FemForward),
    FemPosterior(FemPosterior),
    GraphPrior(GraphPrior),
    GraphPosterior(GraphPosterior),
    Eki(Eki),
    EffectiveDim(EffectiveDim),
    MapLinear(MapLinear),
    MapBurgers(MapProblem),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::FemPrior(_) => "fem-prior",
            Experiment::FemForward(_) => "fem-forward",
            Experiment::FemPosterior(_) => "fem-posterior",
            Experiment::GraphPrior(_) => "graph-prior",
            Experiment::GraphPosterior(_) => "graph-posterior",
            Experiment::Eki(_) => "eki",
            Experiment::EffectiveDim(_) => "effective-dim",
            Experiment::MapLinear(_) => "map-linear",
            Experiment::MapBurgers(_) => "map-burgers",
        }
    }
}

mod defaults {
    use super::*;

    pub fn alpha() -> u32 {
        2
    }
    pub fn one() -> CoefficientFn {
        CoefficientFn::Const(1.0)
    }
    pub fn h_list() -> Vec<f64> {
        vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
    }
    pub fn n_ref() -> usize {
        2048
    }
    pub fn centers() -> Vec<f64> {
        vec![0.2, 0.4, 0.6, 0.8]
    }
    pub fn delta() -> f64 {
        0.05
    }
    pub fn gamma() -> f64 {
        0.01
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn graph_n_list() -> Vec<usize> {
        vec![200, 400, 800, 1600]
    }
    pub fn connectivity() -> f64 {
        1.25
    }
    pub fn equispaced() -> SamplingMode {
        SamplingMode::Equispaced
    }
    pub fn graph_centers() -> Vec<f64> {
        vec![0.1, 0.35, 0.6, 0.85]
    }
    pub fn window_2() -> SlopeWindow {
        SlopeWindow { min: 1.7, max: 2.3, min_r_squared: 0.98 }
    }
    pub fn window_forward() -> SlopeWindow {
        SlopeWindow::new(1.7, 2.3)
    }
    pub fn window_posterior() -> SlopeWindow {
        SlopeWindow::new(1.6, 2.4)
    }
    pub fn window_mc() -> SlopeWindow {
        SlopeWindow::new(-0.65, -0.35)
    }
    pub fn decay_ratio() -> f64 {
        0.6
    }
    pub fn eig_modes() -> usize {
        5
    }
    pub fn eki_h() -> f64 {
        1.0 / 64.0
    }
    pub fn j_list() -> Vec<usize> {
        vec![25, 100, 400, 1600]
    }
    pub fn seeds() -> usize {
        20
    }
    pub fn eff_h_list() -> Vec<f64> {
        vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]
    }
    pub fn eff_factor() -> f64 {
        1.1
    }
    pub fn eff_n_ref() -> usize {
        100_000
    }
    pub fn forward_dt() -> f64 {
        1.0 / 512.0
    }
    pub fn forward_h() -> f64 {
        1.0 / 256.0
    }
    pub fn dt_list() -> Vec<f64> {
        vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
    }
    pub fn map_cases() -> Vec<MapCase> {
        vec![
            MapCase { h: 1.0 / 16.0, alpha: 2, seed: 1 },
            MapCase { h: 1.0 / 16.0, alpha: 1, seed: 2 },
            MapCase { h: 1.0 / 32.0, alpha: 2, seed: 3 },
            MapCase { h: 1.0 / 32.0, alpha: 3, seed: 4 },
            MapCase { h: 1.0 / 64.0, alpha: 2, seed: 5 },
        ]
    }
    pub fn map_tol() -> f64 {
        1e-6
    }
}

/// Prior covariance error against the analytic reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FemPrior {
    #[serde(default = "defaults::h_list")]
    pub h_list: Vec<f64>,
    #[serde(default = "defaults::alpha")]
    pub alpha: u32,
    #[serde(default = "defaults::one")]
    pub theta: CoefficientFn,
    #[serde(default = "defaults::one")]
    pub b: CoefficientFn,
    #[serde(default = "defaults::n_ref")]
    pub n_ref: usize,
    #[serde(default = "defaults::window_2")]
    pub acceptance: SlopeWindow,
}

/// Heat-then-observe forward error, once against `h` and once against `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FemForward {
    #[serde(default = "defaults::h_list")]
    pub h_list: Vec<f64>,
    /// Time step of the `h` sweep.
    #[serde(default = "defaults::forward_dt")]
    pub dt: f64,
    /// Mesh width of the `dt` sweep.
    #[serde(default = "defaults::forward_h")]
    pub h: f64,
    #[serde(default = "defaults::dt_list")]
    pub dt_list: Vec<f64>,
    #[serde(default = "defaults::centers")]
    pub centers: Vec<f64>,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default = "defaults::n_ref")]
    pub n_ref: usize,
    #[serde(default = "defaults::window_forward")]
    pub acceptance: SlopeWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FemPosterior {
    #[serde(default = "defaults::h_list")]
    pub h_list: Vec<f64>,
    /// Time step per mesh; `None` uses `dt = h`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "defaults::alpha")]
    pub alpha: u32,
    #[serde(default = "defaults::one")]
    pub theta: CoefficientFn,
    #[serde(default = "defaults::one")]
    pub b: CoefficientFn,
    #[serde(default = "defaults::centers")]
    pub centers: Vec<f64>,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    /// Noise covariance `gamma * I`.
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::n_ref")]
    pub n_ref: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::window_posterior")]
    pub acceptance: SlopeWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphPrior {
    #[serde(default = "defaults::graph_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "defaults::alpha")]
    pub alpha: u32,
    #[serde(default = "defaults::one")]
    pub theta: CoefficientFn,
    #[serde(default = "defaults::one")]
    pub b: CoefficientFn,
    #[serde(default = "defaults::equispaced")]
    pub sampling: SamplingMode,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::connectivity")]
    pub connectivity_constant: f64,
    /// Reference modes; `None` uses four per point of the largest cloud.
    #[serde(default)]
    pub n_ref: Option<usize>,
    /// Keep only this many graph modes in the prior.
    #[serde(default)]
    pub spectral_cutoff: Option<usize>,
    /// Number of nonzero continuum eigenvalue pairs compared.
    #[serde(default = "defaults::eig_modes")]
    pub eig_modes: usize,
    #[serde(default = "defaults::decay_ratio")]
    pub max_decay_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphPosterior {
    #[serde(default = "defaults::graph_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "defaults::alpha")]
    pub alpha: u32,
    #[serde(default = "defaults::one")]
    pub theta: CoefficientFn,
    #[serde(default = "defaults::one")]
    pub b: CoefficientFn,
    #[serde(default = "defaults::equispaced")]
    pub sampling: SamplingMode,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::connectivity")]
    pub connectivity_constant: f64,
    #[serde(default)]
    pub n_ref: Option<usize>,
    #[serde(default)]
    pub spectral_cutoff: Option<usize>,
    #[serde(default = "defaults::graph_centers")]
    pub centers: Vec<f64>,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Eki {
    #[serde(default = "defaults::eki_h")]
    pub h: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: u32,
    #[serde(default = "defaults::one")]
    pub theta: CoefficientFn,
    #[serde(default = "defaults::one")]
    pub b: CoefficientFn,
    #[serde(default = "defaults::j_list")]
    pub j_list: Vec<usize>,
    /// Seeds `seed_base, seed_base + 1, ...`.
    #[serde(default = "defaults::seeds")]
    pub seeds: usize,
    #[serde(default = "defaults::seed")]
    pub seed_base: u64,
    #[serde(default = "defaults::centers")]
    pub centers: Vec<f64>,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::window_mc")]
    pub acceptance: SlopeWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveDim {
    #[serde(default = "defaults::eff_h_list")]
    pub h_list: Vec<f64>,
    #[serde(default = "defaults::alpha")]
    pub alpha: u32,
    #[serde(default = "defaults::one")]
    pub theta: CoefficientFn,
    #[serde(default = "defaults::one")]
    pub b: CoefficientFn,
    /// Modes used for the analytic trace.
    #[serde(default = "defaults::eff_n_ref")]
    pub n_ref: usize,
    #[serde(default = "defaults::eff_factor")]
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapCase {
    pub h: f64,
    pub alpha: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapLinear {
    #[serde(default = "defaults::map_cases")]
    pub cases: Vec<MapCase>,
    #[serde(default = "defaults::centers")]
    pub centers: Vec<f64>,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::map_tol")]
    pub max_error: f64,
}

/// Allowed increase of the minimal value between refinement levels.
pub const VALUE_SLACK: f64 = 1e-8;

fn nonempty<T>(field: &'static str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::config(field, "list must not be empty"));
    }
    Ok(())
}

fn widths(field: &'static str, v: &[f64]) -> Result<()> {
    nonempty(field, v)?;
    for &h in v {
        if !(h > 0.0 && h < 1.0) || integer_reciprocal(h).is_none() {
            return Err(Error::config(field, format!("{h} is not the reciprocal of an integer >= 2")));
        }
    }
    Ok(())
}

fn min_len<T>(field: &'static str, v: &[T], n: usize) -> Result<()> {
    if v.len() < n {
        return Err(Error::config(field, format!("need at least {n} entries for a rate fit, got {}", v.len())));
    }
    Ok(())
}

fn alpha(a: u32) -> Result<()> {
    if a == 0 {
        return Err(Error::config("alpha", "must be a positive integer"));
    }
    Ok(())
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::config(field, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn unit_points(field: &'static str, v: &[f64]) -> Result<()> {
    nonempty(field, v)?;
    if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::config(field, format!("{x} lies outside [0, 1]")));
    }
    Ok(())
}

fn constant_pair(theta: &CoefficientFn, b: &CoefficientFn) -> Result<()> {
    if theta.constant().is_none() || b.constant().is_none() {
        return Err(Error::config("theta", "the analytic reference needs constant coefficients"));
    }
    Ok(())
}

fn graph_points(n_list: &[usize], c: f64) -> Result<()> {
    nonempty("n_list", n_list)?;
    if let Some(n) = n_list.iter().find(|&&n| n < 3) {
        return Err(Error::config("n_list", format!("{n} points is too few for a graph")));
    }
    positive("connectivity_constant", c)
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field before any computation starts.
    pub fn validate(&self) -> Result<()> {
        match &self.experiment {
            Experiment::FemPrior(c) => {
                widths("h_list", &c.h_list)?;
                min_len("h_list", &c.h_list, 3)?;
                alpha(c.alpha)?;
                constant_pair(&c.theta, &c.b)?;
                positive("n_ref", c.n_ref as f64)
            }
            Experiment::FemForward(c) => {
                widths("h_list", &c.h_list)?;
                min_len("h_list", &c.h_list, 3)?;
                widths("dt_list", &c.dt_list)?;
                min_len("dt_list", &c.dt_list, 3)?;
                widths("h", &[c.h])?;
                widths("dt", &[c.dt])?;
                unit_points("centers", &c.centers)?;
                positive("delta", c.delta)?;
                positive("n_ref", c.n_ref as f64)
            }
            Experiment::FemPosterior(c) => {
                widths("h_list", &c.h_list)?;
                min_len("h_list", &c.h_list, 3)?;
                if let Some(dt) = c.dt {
                    widths("dt", &[dt])?;
                }
                alpha(c.alpha)?;
                constant_pair(&c.theta, &c.b)?;
                unit_points("centers", &c.centers)?;
                positive("delta", c.delta)?;
                positive("gamma", c.gamma)?;
                positive("n_ref", c.n_ref as f64)
            }
            Experiment::GraphPrior(c) => {
                graph_points(&c.n_list, c.connectivity_constant)?;
                alpha(c.alpha)?;
                constant_pair(&c.theta, &c.b)?;
                if c.n_ref == Some(0) || c.spectral_cutoff == Some(0) {
                    return Err(Error::config("n_ref", "mode counts must be positive"));
                }
                positive("max_decay_ratio", c.max_decay_ratio)
            }
            Experiment::GraphPosterior(c) => {
                graph_points(&c.n_list, c.connectivity_constant)?;
                alpha(c.alpha)?;
                constant_pair(&c.theta, &c.b)?;
                if c.n_ref == Some(0) || c.spectral_cutoff == Some(0) {
                    return Err(Error::config("n_ref", "mode counts must be positive"));
                }
                unit_points("centers", &c.centers)?;
                positive("delta", c.delta)?;
                positive("gamma", c.gamma)
            }
            Experiment::Eki(c) => {
                widths("h", &[c.h])?;
                alpha(c.alpha)?;
                nonempty("j_list", &c.j_list)?;
                min_len("j_list", &c.j_list, 3)?;
                if let Some(j) = c.j_list.iter().find(|&&j| j < 2) {
                    return Err(Error::config("j_list", format!("ensemble size {j} is below 2")));
                }
                if c.seeds == 0 {
                    return Err(Error::config("seeds", "need at least one seed"));
                }
                unit_points("centers", &c.centers)?;
                positive("delta", c.delta)?;
                positive("gamma", c.gamma)
            }
            Experiment::EffectiveDim(c) => {
                widths("h_list", &c.h_list)?;
                alpha(c.alpha)?;
                constant_pair(&c.theta, &c.b)?;
                positive("n_ref", c.n_ref as f64)?;
                positive("max_ratio", c.max_ratio)
            }
            Experiment::MapLinear(c) => {
                nonempty("cases", &c.cases)?;
                for case in &c.cases {
                    widths("cases.h", &[case.h])?;
                    alpha(case.alpha)?;
                }
                unit_points("centers", &c.centers)?;
                positive("delta", c.delta)?;
                positive("gamma", c.gamma)?;
                positive("max_error", c.max_error)
            }
            Experiment::MapBurgers(c) => c.validate(),
        }
    }
}
