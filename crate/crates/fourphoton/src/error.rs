//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    /// A path label could not be parsed.
    #[error("unknown path label `{0}`")]
    UnknownPath(String),

    /// An element refers to a path the circuit does not declare.
    #[error("path `{0}` is not declared by the circuit")]
    UndeclaredPath(String),

    /// A beam displacer met an occupied mode its branch map does not route.
    #[error("beam displacer `{element}` does not cover occupied mode {mode}")]
    UncoveredMode { element: String, mode: String },

    /// Pair creation was asked to put signal and idler into the same mode.
    #[error("signal and idler of a pair must be distinct modes")]
    DegeneratePair,

    /// An operation needs more photon-number headroom than the state keeps.
    #[error("state truncation {truncation} is too small (needs {required})")]
    TruncationTooSmall { truncation: u32, required: u32 },

    /// Normalization of a state with no amplitude left.
    #[error("cannot normalize a zero-norm state")]
    ZeroNorm,

    /// A parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A geometry violates the layout ordering constraints.
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    /// A delay scan found no peak above the dark floor.
    #[error("delay calibration failed: {0}")]
    CalibrationFailed(String),

    /// Configuration file parsing or validation failure.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit code for the command-line binary: 1 for configuration
    /// problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::UnknownPath(_)
            | SimError::UndeclaredPath(_)
            | SimError::InvalidParameter(_)
            | SimError::InfeasibleGeometry(_)
            | SimError::Config(_) => 1,
            _ => 2,
        }
    }
}
