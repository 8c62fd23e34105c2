use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not primitive (no power up to {max_power} is strictly positive)")]
    NotPrimitive { max_power: usize },

    #[error("matrix has a zero column ({column})")]
    ZeroColumn { column: usize },

    #[error("matrix kills a direction of the simplex (iota = 0)")]
    SingularDirection,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("P[N = 1] = 0: no singleton branch")]
    NoSingletonBranch,

    #[error("an atom of the singleton-branch law annihilates a direction; kernel undefined")]
    FurstenbergKestenViolated,

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("tree population exceeded node budget {budget}")]
    SupercriticalBlowup { budget: usize },

    #[error("enumeration exceeded element budget {budget}")]
    BudgetExceeded { budget: usize },

    #[error("value {value} out of range [0, {max}]")]
    OutOfRange { value: f64, max: f64 },

    #[error("negative input coordinate")]
    NegativeInput,

    #[error("transform curve never decays below the fit threshold")]
    InsufficientDecay,

    #[error("no samples fall below the largest radius of the grid")]
    EmptyTail,

    #[error("harmonic moment of the weights diverges before the root")]
    MomentRangeExceeded,

    #[error("model file not found: {0}")]
    ModelNotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line driver: 2 for bad input,
    /// 3 for failed computations, 4 for exhausted budgets.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidMatrix(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidModel(_)
            | Error::NegativeInput
            | Error::OutOfRange { .. }
            | Error::ModelNotFound(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::SupercriticalBlowup { .. } | Error::BudgetExceeded { .. } => 4,
            _ => 3,
        }
    }
}
