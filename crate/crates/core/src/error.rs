use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("mesh is not a closed 2-manifold: {0}")]
    Manifold(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("refinement plan is not closed: {0}")]
    OpenPlan(String),

    #[error("kernel singularity: source and target coincide (distance {distance:e})")]
    Singularity { distance: f64 },

    #[error("point {index} lies outside the molecular surface (winding number {winding:.6})")]
    Domain { index: usize, winding: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("GMRES did not converge in {iterations} iterations (best relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("Kirkwood series not converged after {n_terms} terms (tail estimate {tail:e})")]
    SeriesNotConverged { n_terms: usize, tail: f64 },

    #[error("sequence is not monotone: {0}")]
    NonMonotone(String),

    #[error("undefined: {0}")]
    Undefined(String),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
