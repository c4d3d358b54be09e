use thiserror::Error;

/// Everything that can go wrong in the toolkit.
///
/// Validation problems map to exit code 1, numerical failures to 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("series did not converge after {terms} terms (partial sum {partial:e}, last term {last:e})")]
    NoConvergence { terms: usize, partial: f64, last: f64 },

    #[error("series lost {digits:.1} digits to cancellation at z = {z:e}; use the asymptotic branch")]
    Cancellation { z: f64, digits: f64 },

    #[error("fit error {best:e} above ceiling {ceiling:e}")]
    FitCeiling {
        best: f64,
        ceiling: f64,
        nodes: Vec<f64>,
        weights: Vec<f64>,
    },

    #[error("negative concentration {value:e} (peak {peak:e}) at t = {t:e}")]
    Negativity { value: f64, peak: f64, t: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Config { .. } | Error::Io(_) | Error::Json(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
