use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("insufficient correspondences: {0} (need at least 3)")]
    InsufficientCorrespondences(usize),

    #[error("no pose found")]
    NoPoseFound,

    #[error("no near-surface predictions")]
    NoNearSurface,

    #[error("sign undefined: {0}")]
    SignUndefined(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("object too small/far for sampling config: {0}")]
    Sampling(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("object invisible")]
    ObjectInvisible,

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of the numerical pipeline rather than of inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::NoPoseFound | Error::NoNearSurface | Error::Degenerate(_) | Error::InsufficientCorrespondences(_)
        )
    }
}
