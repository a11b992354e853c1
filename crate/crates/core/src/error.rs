use crate::linsolve::SolveStats;
use crate::schemes::SchemeKind;

/// Errors surfaced by the solver library.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("field mean {mean:e} exceeds the zero-mean tolerance {bound:e}")]
    NonZeroMean { mean: f64, bound: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("scheme {0:?} needs a previous-step state")]
    MissingHistory(SchemeKind),

    #[error(
        "linear solver failed to converge: {} iterations, relative residual {:e}",
        .0.iterations, .0.final_residual
    )]
    SolverDiverged(SolveStats),

    #[error("operator is not positive definite (p'Ap = {curvature:e} at iteration {iteration})")]
    IndefiniteOperator { iteration: usize, curvature: f64 },

    #[error("convergence sweep aborted at dt = {dt}: {source}")]
    SweepAborted { dt: f64, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
