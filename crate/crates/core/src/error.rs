use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("laplace solver did not converge after {iterations} iterations (max residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("environment covers {available:.6} s but {required:.6} s were requested")]
    EnvironmentTooShort { required: f64, available: f64 },

    #[error("series too short: need at least {required} samples, got {got}")]
    SeriesTooShort { required: usize, got: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("unknown gate token `{0}`")]
    UnknownGate(String),

    #[error("invalid pulse sequence: {0}")]
    InvalidSequence(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error in {source_name}: {message}")]
    Schema {
        source_name: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
