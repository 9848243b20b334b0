use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument {x} lies outside the admissible range (edge {edge})")]
    OutOfSupport { x: f64, edge: f64 },

    #[error("transform argument {y} exceeds the domain supremum {sup}")]
    DomainExceeded { y: f64, sup: f64 },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("invalid shape ratio: {0}")]
    InvalidShapeRatio(String),

    #[error("insufficient tail samples: {0}")]
    InsufficientTail(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable tag used by the CLI and the C interface.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfSupport { .. } => "OutOfSupport",
            Error::DomainExceeded { .. } => "DomainExceeded",
            Error::NonConvergence(_) => "NonConvergence",
            Error::DegenerateDensity(_) => "DegenerateDensity",
            Error::InvalidShapeRatio(_) => "InvalidShapeRatio",
            Error::InsufficientTail(_) => "InsufficientTail",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
