use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    /// The design matrix is not of full column rank.
    #[error("singular design: rank {rank} < {columns} columns")]
    SingularDesign { rank: usize, columns: usize },

    #[error("underdetermined model: {areas} areas for {columns} regression columns")]
    Underdetermined { areas: usize, columns: usize },

    #[error("numerical failure at iteration {iteration}: {what}")]
    NumericalFailure { iteration: usize, what: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Fewer positive Moran eigenvalues than basis columns requested.
    #[error("insufficient spectrum: requested {requested} basis vectors, {available} positive eigenvalues available")]
    InsufficientSpectrum { requested: usize, available: usize },

    /// Areas with fewer than two sampled units.
    #[error("insufficient sample in areas {areas:?}")]
    InsufficientSample { areas: Vec<String> },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
