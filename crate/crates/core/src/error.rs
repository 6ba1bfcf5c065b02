use nalgebra::DVector;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("ill-conditioned system in {context} (condition estimate {condition:.3e})")]
    Conditioning { context: &'static str, condition: f64 },

    #[error("coefficient {name} = {value} is not admissible at x = {x}")]
    Coefficient { name: &'static str, x: f64, value: f64 },

    #[error("reference truncation too coarse: trailing/leading eigenvalue ratio {ratio:.3e} exceeds {limit:.1e}")]
    Truncation { ratio: f64, limit: f64 },

    #[error("covariance factorization failed: smallest eigenvalue {min_eigenvalue:.3e}")]
    Factor { min_eigenvalue: f64 },

    #[error("ensemble needs at least 2 members, got {0}")]
    EnsembleSize(usize),

    #[error("degenerate operator: {0}")]
    Degenerate(&'static str),

    #[error("optimizer hit {iterations} iterations (gradient norm {grad_norm:.3e})")]
    MaxIterations {
        iterations: usize,
        grad_norm: f64,
        best: Box<DVector<f64>>,
    },

    #[error("forward solve diverged at t = {time:.4} (norm {norm:.3e})")]
    Divergence { time: f64, norm: f64 },

    #[error("rate fit: {0}")]
    Fit(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            found,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Non-fatal conditions recorded alongside a result.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Warning {
    DisconnectedGraph { components: usize },
    EmptyBall { center: usize },
    BelowEffectiveDimension { ensemble_size: usize, effective_dimension: f64 },
}
