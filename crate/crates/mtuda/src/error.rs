use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("{path}: row {row}, column {col}: cannot parse {cell:?} as a number")]
    CsvParse {
        path: String,
        row: usize,
        col: usize,
        cell: String,
    },

    #[error("{path}: row {row} has {got} fields, expected {expected}")]
    CsvRagged {
        path: String,
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("{path}: file contains no data rows")]
    CsvEmpty { path: String },

    #[error("{path}: label column {col} out of range for {width} columns")]
    LabelColumnOutOfRange { path: String, col: usize, width: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: usize, class_count: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("automatic bandwidth undefined: all pairwise distances are zero")]
    DegenerateBandwidth,

    #[error("neighbor count p={p} must be < number of target samples ({n_t})")]
    NeighborCount { p: usize, n_t: usize },

    #[error("linear system is singular or too ill conditioned (condition estimate {cond_estimate:.3e})")]
    SingularSystem { cond_estimate: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
