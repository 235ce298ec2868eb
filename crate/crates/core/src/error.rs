use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not a proper rotation (orthonormality residual {residual:.3e}, det {det:.6})")]
    NonOrthonormal { residual: f64, det: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u32,
        column: u32,
        message: String,
    },

    #[error("robot structure error: {0}")]
    Structure(String),

    #[error("robot validation error: {0}")]
    Validation(String),

    #[error("robot is not bilaterally symmetric: {0}")]
    Asymmetry(String),

    #[error("unknown link `{0}`")]
    UnknownLink(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },

    #[error("demonstration success rate collapsed: {kept} successes after {attempts} attempts")]
    SuccessCollapse { kept: usize, attempts: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
