use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("panel date error at line {line}: {msg}")]
    Gap { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("range error: missing cell (age {age}, year {year})")]
    Range { age: i32, year: i32 },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("simulation error on path {path}, period {period}: {msg}")]
    Simulation {
        path: usize,
        period: usize,
        msg: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("network spec error: {0}")]
    Spec(String),

    #[error("non-finite gradient in parameter block {block}")]
    NonFiniteGradient { block: &'static str },

    #[error("training diverged at iteration {iteration}: objective {value}")]
    Training { iteration: usize, value: f64 },

    #[error("pool error: {0}")]
    Pool(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
