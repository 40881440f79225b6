use std::path::PathBuf;

use crate::landmarks::FacialPart;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("landmark projection incomplete, no surface hit for indices {missing:?}")]
    ProjectionIncomplete { missing: Vec<usize> },

    #[error("degenerate facial part: {part}")]
    DegeneratePart { part: FacialPart },

    #[error("points are coplanar, cannot tetrahedralize")]
    Coplanar,

    #[error("tetrahedralization failed: {0}")]
    Delaunay(String),

    #[error("mesh cross-section at y = {height} is empty")]
    EmptyCrossSection { height: f64 },

    #[error("pose animation requires y_torso to be set")]
    TorsoLineUnset,

    #[error("click at {pixel:?} does not land near the avatar")]
    ClickMissed { pixel: [f64; 2] },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("manifest field `{field}`: {reason}")]
    Manifest { field: String, reason: String },

    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Whether the error stems from bad user input (as opposed to a runtime failure).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidInput(_)
            | Error::Manifest { .. }
            | Error::Format { .. }
            | Error::TorsoLineUnset
            | Error::ClickMissed { .. } => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Frame { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
