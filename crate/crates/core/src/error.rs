use std::path::PathBuf;

use crate::model::DualSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    /// The solver hit its iteration cap; the partial solution is attached.
    #[error("iteration limit reached with KKT violation {:.3e}", .0.kkt_violation)]
    IterationLimit(Box<DualSolution>),

    #[error("oracle supports n <= {max_n} and d <= {max_d}, got n = {n}, d = {d}")]
    ScaleExceeded {
        n: usize,
        d: usize,
        max_n: usize,
        max_d: usize,
    },

    #[error("dimension {dim} exceeds the materialization limit {limit}")]
    DimensionLimit { dim: usize, limit: usize },

    #[error("shift ({dx}, {dy}) exceeds half the smaller image side")]
    ShiftTooLarge { dx: i64, dy: i64 },

    #[error("rotation of {0} degrees exceeds the 15 degree limit")]
    AngleTooLarge(f64),

    #[error("image has zero total intensity")]
    BlankImage,

    #[error("bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("at least 2 folds are required, got {0}")]
    InsufficientFolds(usize),

    #[error("malformed metric file: {0}")]
    MetricFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
