use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch { left: [usize; 3], right: [usize; 3] },

    #[error("empty foreground")]
    EmptyForeground,

    #[error("empty source set")]
    EmptySources,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at voxel {0}")]
    NonFinite(usize),

    #[error("value {value} at voxel {index} lies outside [0, 1]")]
    OutOfUnitRange { index: usize, value: f64 },

    #[error("chain voxels {0} and {1} are not 26-adjacent")]
    NonAdjacentChain(usize, usize),

    #[error("mask is not connected ({0} components)")]
    Disconnected(usize),

    #[error("phantom generation {generation} does not fit inside the volume")]
    PhantomOutOfBounds { generation: usize },

    #[error("requested {requested} breakages but only {eligible} branches are eligible")]
    TooManyBreakages { requested: usize, eligible: usize },

    #[error("could not sever branch {branch} with a single gap")]
    GapPlacement { branch: usize },

    #[error("{path}: header line {line}: {message}")]
    Header {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: payload size mismatch: header implies {expected} bytes, found {found}")]
    PayloadSize {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("unsupported element type {0}")]
    UnsupportedElementType(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DimMismatch { .. } => "DIM_MISMATCH",
            Error::EmptyForeground => "EMPTY_FOREGROUND",
            Error::EmptySources => "EMPTY_SOURCES",
            Error::InvalidArgument(_) | Error::NonFinite(_) | Error::OutOfUnitRange { .. } => {
                "INVALID_ARGUMENT"
            }
            Error::NonAdjacentChain(..) => "INVALID_CHAIN",
            Error::Disconnected(_) => "DISCONNECTED",
            Error::PhantomOutOfBounds { .. } => "OUT_OF_BOUNDS",
            Error::TooManyBreakages { .. } | Error::GapPlacement { .. } => "BREAKAGE",
            Error::Header { .. } | Error::UnsupportedElementType(_) => "FORMAT",
            Error::PayloadSize { .. } => "SIZE_MISMATCH",
            Error::Config { .. } => "CONFIG",
            Error::Io(_) => "IO",
            Error::Json(_) => "IO",
        }
    }
}

pub(crate) fn check_dims(left: [usize; 3], right: [usize; 3]) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::DimMismatch { left, right })
    }
}
