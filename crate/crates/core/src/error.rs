use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular system: eigenvalue {eigenvalue:e} (index {index}) plus damping {damping:e} is numerically zero")]
    Singular {
        index: usize,
        eigenvalue: f64,
        damping: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dense Hessian refused: {params} parameters exceeds the limit of {limit}")]
    TooLarge { params: usize, limit: usize },

    #[error("step failed: {0}")]
    StepFailure(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("eigendecomposition failed to converge")]
    EigenFailure,

    #[error("bad magic number {found:#010x} in {path}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
