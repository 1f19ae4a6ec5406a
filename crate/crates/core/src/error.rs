use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported polynomial degree {0}; only 1 and 2 are available")]
    UnsupportedDegree(u32),

    #[error("incompatible meshes: {0}")]
    IncompatibleMesh(String),

    #[error("linear system is not positive definite (pivot {pivot} = {value:e}); b' must be nonnegative")]
    IndefiniteSystem { pivot: usize, value: f64 },

    #[error("problem data violates its assumptions: {0}")]
    ProblemData(String),

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NewtonFailure { iterations: usize, residual: f64 },

    #[error("reference quadrature did not converge: {0}")]
    OracleFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
