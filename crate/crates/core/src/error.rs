use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty quadrature region")]
    EmptyRegion,

    #[error("grid too coarse for stencils (need at least 4 points per axis, got {0})")]
    GridTooCoarse(usize),

    #[error("time grid too coarse: no time level at or below {0}")]
    TimeGridTooCoarse(f64),

    #[error("empty ball family")]
    EmptyBallFamily,

    #[error("{0} is not a time level of the grid")]
    NotATimeLevel(f64),

    #[error("blow-up detected at iteration {0}")]
    BlowUp(usize),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
