use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("simulator does not support resetting to this state")]
    ResetUnsupported,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("longitudinal speed {v_x} below simulation minimum {v_min}")]
    BelowMinSpeed { v_x: f64, v_min: f64 },

    #[error("policy crashed in {crashed} of {total} rollouts")]
    PolicyUnsafe { crashed: usize, total: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("no zero-crossing cells found; barrier is degenerate")]
    DegenerateBarrier,

    #[error("level set B = {0} does not intersect the grid")]
    EmptyLevelSet(f64),

    #[error("no grid cell lies strictly inside the barrier")]
    NoInteriorCells,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error("parse error in {file}: {msg}")]
    Parse { file: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation failures map to CLI exit code 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidTrack(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::Parse { .. }
        )
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}
