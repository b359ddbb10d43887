use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("structural error: node {id} does not exist on a tape of length {len}")]
    UnknownNode { id: usize, len: usize },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("non-finite value or partial produced at tape node {node}")]
    NonFinite { node: usize },

    #[error("linear system is singular (pivot column {column})")]
    Singular { column: usize },

    #[error("constraint Jacobian singular, implicit function undefined here ({context})")]
    ImplicitUndefined { context: String },

    #[error("solver did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("program has {outputs} outputs; a scalar output is required")]
    NotScalar { outputs: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("trajectory diverged at step {step}")]
    DivergedTrajectory { step: usize },

    #[error("inconsistent initialization: algebraic states could not be solved ({reason})")]
    InconsistentInitialization { reason: String },

    #[error("program evaluation failed: {0}")]
    Program(String),

    #[error("unknown problem `{name}`; available: {}", available.join(", "))]
    UnknownProblem { name: String, available: Vec<String> },

    #[error("method `{method}` is not available for {kind} problems")]
    UnsupportedMethod { method: String, kind: String },
}

impl Error {
    pub(crate) fn dims(what: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            found,
        }
    }

    /// Maps a singular linear solve onto the implicit-function failure.
    pub(crate) fn implicit(self, context: &str) -> Self {
        match self {
            Error::Singular { .. } => Error::ImplicitUndefined {
                context: context.to_string(),
            },
            other => other,
        }
    }

    /// True for failures of an inner numerical solver (as opposed to usage errors).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::ImplicitUndefined { .. }
                | Error::NonConvergence { .. }
                | Error::IntegrationFailure { .. }
                | Error::DivergedTrajectory { .. }
                | Error::InconsistentInitialization { .. }
                | Error::NonFinite { .. }
                | Error::Program(_)
        )
    }
}
