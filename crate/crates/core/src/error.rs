use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Low-power Q not below high-power Q: the device is not TLS dominated.
    #[error("non-positive TLS loss: q_low = {q_low} must be below q_high = {q_high}")]
    NonPositiveTlsLoss { q_low: f64, q_high: f64 },

    #[error("lossless model: every participation-loss product is zero")]
    LosslessModel,

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("region `{region}` is an interface region but has no {field}")]
    MissingThickness { region: String, field: &'static str },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("zero matrix has no condition number")]
    ZeroMatrix,

    #[error(
        "nnls did not converge after {iterations} active-set passes \
         (max dual {max_dual:e}, passive set {passive:?})"
    )]
    NotConverged {
        iterations: usize,
        max_dual: f64,
        passive: Vec<usize>,
    },

    #[error("positive draw not found after {attempts} resamples (mean {mean:e}, sd {sd:e})")]
    RejectionLimit { attempts: usize, mean: f64, sd: f64 },

    #[error("no usable samples: {0}")]
    NoUsableSamples(String),

    #[error("insufficient samples per design: N = {n} but at least {required} required")]
    InsufficientSamples { n: usize, required: usize },

    #[error("{count} subsets exceed the enumeration limit of {limit}; prune the library")]
    TooManySubsets { count: u128, limit: u128 },

    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn mismatch(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for failures of a numerical procedure on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::RejectionLimit { .. }
                | Error::NoUsableSamples(_)
                | Error::LosslessModel
                | Error::ZeroMatrix
        )
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }
}
