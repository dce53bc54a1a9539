use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum PcoError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no calibrated noise constants for {distribution} at p = {p}")]
    Uncalibrated { distribution: String, p: f64 },

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("collection too large for exhaustive search: {count} candidates (limit {limit})")]
    TooLarge { count: u128, limit: u128 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PcoError>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::PcoError::$variant(format!($($arg)*)))
    };
}
pub(crate) use bail;
