use thiserror::Error;

/// Errors produced by the fitting pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate conic: {0}")]
    DegenerateConic(&'static str),

    /// All kernel distances coincide, so the bandwidth subproblem has no
    /// usable spread.
    #[error("degenerate residual sample: all distances to the kernel center are equal")]
    DegenerateSample,

    /// A fixed-point loop hit its iteration cap. `last` is the final iterate.
    #[error("no convergence after {iterations} iterations (last iterate {last})")]
    ConvergenceFailure { iterations: usize, last: f64 },

    #[error("conic program is infeasible: {0}")]
    Infeasible(String),

    #[error("conic solver stopped after {iterations} iterations (scaled gap {gap:.3e})")]
    SolverStalled { iterations: usize, gap: f64 },

    /// Coupled fit produced a non-positive level offset, i.e. the "inner"
    /// ellipse is not inside the outer one.
    #[error("coupled fit is degenerate: level offset eta = {eta:.6e} is not positive")]
    CoupledDegenerate { eta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
