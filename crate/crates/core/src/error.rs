use std::path::PathBuf;

use thiserror::Error;

use crate::fem::NodalField;
use crate::matcher::MatchAbort;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid mesh: {0}")]
    Validation(String),

    #[error("material domain error: det F = {det:e} is below the admissible threshold")]
    Domain { det: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("inverted elements under the current deformation: {tets:?}")]
    Flipped { tets: Vec<usize> },

    #[error("factorization of {block} broke down at pivot {pivot} (pivot ratio {condition:e})")]
    Factorization {
        block: &'static str,
        pivot: usize,
        condition: f64,
    },

    #[error("newton solver did not converge after {} iterations (last residual {:e})",
        .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    NewtonNotConverged {
        last: Box<NodalField>,
        history: Vec<f64>,
    },

    #[error("newton line search stalled (step {step:e}) at iteration {iteration}")]
    LineSearch { iteration: usize, step: f64 },

    #[error("cone solver hit the iteration cap ({iterations}) with relative gap {gap:e}")]
    SocpMaxIterations {
        iterations: usize,
        gap: f64,
        best: Box<crate::socp::ConicSolution>,
    },

    #[error("cone solver failed: {0}")]
    SocpNumerical(String),

    #[error("eigensolver converged only {attained} of {requested} eigenpairs")]
    Eigen { requested: usize, attained: usize },

    #[error("configuration error for `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("matching aborted in stage `{}` at iteration {}: {}",
        .0.stage, .0.iteration, .0.source)]
    MatchAborted(Box<MatchAbort>),

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
