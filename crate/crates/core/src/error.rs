use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("point w = {w} lies inside the unit disk (|w| < 1)")]
    InsideUnitDisk { w: Complex64 },

    #[error("point z = {z} lies strictly inside the obstacle")]
    InsideObstacle { z: Complex64 },

    #[error("forward map did not converge for z = {z}")]
    InversionFailure { z: Complex64 },

    #[error("patch {index} intersects the obstacle")]
    PatchIntersectsObstacle { index: usize },

    #[error("singular evaluation: {0}")]
    Singularity(String),

    #[error(
        "particle {particle} crossed the obstacle boundary during the step starting at t = {t}; \
         try a smaller dt"
    )]
    BoundaryPenetration { particle: usize, t: f64 },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("vorticity mass is zero; center of vorticity undefined")]
    ZeroMass,

    #[error("fit error: {0}")]
    Fit(String),

    #[error("property violation: {0}")]
    PropertyViolation(String),

    #[error("parse error at line {line} (key `{key}`): {msg}")]
    Parse {
        line: usize,
        key: String,
        msg: String,
    },

    #[error("invalid config (`{key}`): {msg}")]
    InvalidConfig { key: String, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
