use thiserror::Error;

use crate::krylov::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),

    #[error("invalid subdomain layout: {0}")]
    InvalidLayout(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A factorization produced no usable solve; `what` names the operator
    /// (corrector patch, subdomain, coarse matrix) and `id` its index.
    #[error("singular {what} {id}: {detail}")]
    Singular {
        what: &'static str,
        id: usize,
        detail: String,
    },

    #[error("GMRES breakdown at iteration {iteration} with relative residual {residual:.3e}")]
    Breakdown { iteration: usize, residual: f64 },

    #[error("GMRES did not converge in {} iterations (relative residual {:.3e})", .report.iterations, .report.final_residual)]
    NotConverged { report: Box<SolveReport> },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// The innermost error after unwrapping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
