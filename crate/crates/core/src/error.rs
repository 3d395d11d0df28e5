use thiserror::Error;

use crate::model::Violation;
use crate::pf::PfSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {}", format_violations(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        best: Box<PfSolution>,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("unsupported instance: {0}")]
    Unsupported(String),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("oracle too large: {0}")]
    OracleTooLarge(String),

    #[error("{context}: {source}")]
    SubSolve {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("identity not applicable: clamp fired for agent {0}")]
    IdentityNotApplicable(usize),

    #[error("rejected sample: {0}")]
    RejectedSample(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidInstance(vec![Violation::new(path, message)])
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::SubSolve {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
