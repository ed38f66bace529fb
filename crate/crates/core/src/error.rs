use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no leader-rooted spanning tree: follower(s) {unreachable:?} cannot be reached from the leader")]
    NoSpanningTree { unreachable: Vec<usize> },

    #[error("sub-Laplacian is singular (pivot {pivot:e} in column {column}); the leader-rooted spanning tree assumption is violated")]
    SingularLaplacian { pivot: f64, column: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigenvalue iteration did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("leader input |f0| = {value} exceeds the bound {bound} at t = {time}")]
    InputBoundViolated { value: f64, bound: f64, time: f64 },

    #[error("non-finite observer derivative at t = {time}")]
    NonFinite { time: f64 },

    #[error("infeasible topology: {0}")]
    InfeasibleTopology(String),

    #[error("simulation diverged at t = {time} (|state| = {magnitude:e})")]
    Diverged { time: f64, magnitude: f64 },

    #[error("invalid value: {0}")]
    Invalid(String),
}
