use std::path::PathBuf;

/// Errors raised by the segmentation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("element {element} is inverted or degenerate (det = {det:e})")]
    InvertedElement { element: usize, det: f64 },

    #[error("mesh tangled: element {element} has det = {det:e} after the update")]
    MeshTangled { element: usize, det: f64 },

    #[error("element map is singular or orientation-reversing (det J = {det:e})")]
    SingularMap { det: f64 },

    #[error("point lies outside the domain by {distance:e}")]
    OutOfDomain { distance: f64 },

    #[error("image parse error at byte {offset}: {message}")]
    ImageParse { offset: usize, message: String },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image is flat (|grad g|_max = 0); segmentation is meaningless")]
    FlatImage,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {dt:e} fell below the minimum at t = {t}")]
    StepTooSmall { t: f64, dt: f64 },

    #[error("integrator failure at t = {t}: {reason}")]
    Integrator { t: f64, reason: String },

    #[error("phase field left [{lo}, {hi}] at t = {t}: min {min}, max {max}")]
    PhiOutOfRange {
        t: f64,
        min: f64,
        max: f64,
        lo: f64,
        hi: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
