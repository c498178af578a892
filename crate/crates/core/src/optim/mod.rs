//! Shared numeric kernels: Nelder-Mead simplex minimization, SVD null
//! spaces, small symmetric eigenproblems and an active-set QP.

mod eigen;
mod qp;
mod simplex;
mod svd;

pub use eigen::{sym_eigen3, SymEigen3};
pub use qp::inequality_qp;
pub use simplex::{nelder_mead, SimplexConfig, SimplexResult, Termination};
pub use svd::{jacobi_svd, null_space, JacobiSvd, NullSpaceBasis, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("evaluation budget of {evals} exhausted; best value {best}")]
    MaxEvalsExceeded { evals: usize, best: f64 },
    #[error("matrix has full column rank {rank}; null space is empty")]
    EmptyNullSpace { rank: usize },
    #[error("objective is not finite at initial simplex vertex {0}")]
    NonFiniteStart(usize),
    #[error("starting point violates the constraints")]
    InfeasibleStart,
    #[error("invalid simplex configuration: {0}")]
    InvalidConfig(String),
}
