use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left:?}, right is {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("buffer of length {len} cannot back a {rows}x{cols} matrix")]
    BadBuffer { rows: usize, cols: usize, len: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error(
        "Gibbs kernel underflowed to zero (lambda = {lambda}, max cost = {max_cost}); \
         use a larger lambda or the log-domain solver"
    )]
    KernelUnderflow { lambda: f64, max_cost: f64 },

    #[error("degenerate vector (norm {norm:e}) in {context}")]
    Degenerate { context: &'static str, norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class_id} has only {available} annotated instances, {required} required")]
    NotEnoughShots {
        class_id: usize,
        available: usize,
        required: usize,
    },

    #[error("unknown class id {class_id} (model knows {num_classes} classes)")]
    UnknownClass { class_id: usize, num_classes: usize },

    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("incompatible data: {0}")]
    Incompatible(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
