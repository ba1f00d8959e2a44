use thiserror::Error;

/// Errors raised by the pruning engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PruneError {
    #[error("prompt matrix has no rows")]
    EmptyPrompt,
    #[error("visual matrix has no rows")]
    EmptyVisual,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix shape {rows}x{cols} does not match data length {len}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error("embedding dimension must be at least 1")]
    ZeroColumns,
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("k = {k} out of range for {n} tokens")]
    KOutOfRange { k: usize, n: usize },
    #[error("token index {index} out of range for {n} tokens")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("token index {0} selected twice")]
    DuplicateIndex(usize),
    #[error("requested {steps} diversity steps but only {pool} candidates remain")]
    PoolExhausted { steps: usize, pool: usize },
    #[error("ratio {0} outside [0, 1]")]
    RatioOutOfRange(f64),
    #[error("budget must be at least 1")]
    BudgetZero,
    #[error("prune rate {0} outside [0, 1)")]
    RateOutOfRange(f64),
    #[error("strategy {0} needs a prompt matrix")]
    MissingPrompt(&'static str),
    #[error("degenerate scenario parameters: {0}")]
    DegenerateParams(String),
}

pub type Result<T, E = PruneError> = std::result::Result<T, E>;
