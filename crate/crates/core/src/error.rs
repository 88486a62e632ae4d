use alloc::string::String;

/// Everything that can go wrong inside the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is singular: best pivot {pivot:e} in column {column} is below 1e-12")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("invalid example: {0}")]
    InvalidExample(String),

    #[error("label {label} out of range for {q} classes")]
    LabelOutOfRange { label: usize, q: usize },

    #[error("example {index} has no {label_source} label")]
    MissingLabels { index: usize, label_source: &'static str },

    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("generation stalled: {accepted} accepted out of {drawn} draws")]
    GenerationStalled { accepted: u64, drawn: u64 },

    #[error("no candidate update vector has norm above the stopping threshold")]
    NoViableCandidate,

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("invalid bound query: {0}")]
    InvalidQuery(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
