use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("weight overflow: {0}")]
    Overflow(String),
    #[error("chirp aliasing bound violated: L/(2T) = {lhs} exceeds pi/h = {rhs}")]
    Aliasing { lhs: f64, rhs: f64 },
    #[error("Nyquist bound violated: {what} = {value} exceeds pi/h = {limit}")]
    Nyquist { what: String, value: f64, limit: f64 },
    #[error("unresolvable sequence index: {0}")]
    Unresolvable(String),
    #[error("penalised observability estimate infeasible: {0}")]
    Infeasible(String),
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },
    #[error("operator is not positive definite: curvature {curvature:e} at iteration {iteration}")]
    Indefinite { iteration: usize, curvature: f64 },
    #[error("operator is not self-adjoint: defect {0:e}")]
    NotSelfAdjoint(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
