use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid annotations: {0}")]
    InvalidAnnotations(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("node {node} has zero degree in the scotch-taped graph")]
    ZeroDegree { node: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("infeasible block specification: {0}")]
    Infeasible(String),

    #[error("eigensolver did not converge (best residual {best_residual:e})")]
    Convergence { best_residual: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    FixedPoint { iterations: usize, last_change: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("operator of dimension {dim} exceeds the dense threshold {limit}")]
    TooLargeForDense { dim: usize, limit: usize },

    #[error("ill-posed Green's function application: {0}")]
    IllPosed(String),

    #[error("resolvent is singular: lambda {lambda} is within {gap:e} of an unperturbed eigenvalue")]
    ResolventSingular { lambda: f64, gap: f64 },

    #[error("population update unstable at lambda {lambda}: rejection rate {rate}")]
    Instability { lambda: f64, rate: f64 },

    #[error("lambda bracket [{lo}, {hi}] does not straddle a root (functional {f_lo} / {f_hi})")]
    NoSolution { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
}
