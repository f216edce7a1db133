use thiserror::Error;

/// Errors raised by mesh construction, local operator assembly and the global solve.
#[derive(Debug, Error)]
pub enum WgError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate cell {cell}: area {area:e}")]
    DegenerateCell { cell: usize, area: f64 },

    #[error("triangulation failed for cell {cell}: {reason}")]
    Triangulation { cell: usize, reason: String },

    #[error("conditioning failure: {0}")]
    ConditioningFailure(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("probe too large: {dofs} unknowns exceeds the dense limit of {limit}")]
    ProbeTooLarge { dofs: usize, limit: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("mesh format error at line {line}: {message}")]
    MeshFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = WgError> = std::result::Result<T, E>;
