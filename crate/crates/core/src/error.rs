use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate rectangle: side lengths must be positive")]
    DegenerateRectangle,

    #[error("mesh does not conform to the partition-of-unity kinks: {0}")]
    MeshNotConforming(String),

    #[error("Newton solver did not converge after {iterations} iterations (last residual {last_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        last_residual: f64,
        history: Vec<f64>,
        last_iterate: Vec<f64>,
        context: String,
    },

    #[error("singular Jacobian: {0}")]
    SingularJacobian(String),

    #[error("Gram matrix is not positive definite on the requested subspace")]
    IndefiniteGram,

    #[error("permeability denominator underflow at u = {u}")]
    DenominatorUnderflow { u: f64 },

    #[error("degenerate boundary sample after {retries} retries")]
    DegenerateSample { retries: usize },

    #[error("zero snapshot in error indicator (index {0})")]
    ZeroSnapshot(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operation only supported for linear models: {0}")]
    LinearModelOnly(String),

    #[error("enrichment space does not enlarge the reduced space")]
    RankDeficientEnrichment,

    #[error("constant must be positive: {0}")]
    NonPositiveConstant(&'static str),

    #[error("{failed} of {total} transfer solves failed")]
    TrainingFailures { failed: usize, total: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed matrix file: {0}")]
    MatrixFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Adds provenance to a solver failure; other variants pass through.
    pub fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::NonConvergence {
                iterations,
                last_residual,
                history,
                last_iterate,
                context,
            } => {
                let ctx = ctx.into();
                let context = if context.is_empty() {
                    ctx
                } else {
                    format!("{ctx}: {context}")
                };
                Error::NonConvergence {
                    iterations,
                    last_residual,
                    history,
                    last_iterate,
                    context,
                }
            }
            other => other,
        }
    }

    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SingularJacobian(_)
                | Error::DenominatorUnderflow { .. }
        )
    }
}
