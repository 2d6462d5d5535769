use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPd { min_eig: f64 },
    #[error("numerical rank {rank} is below the required {required}")]
    RankDeficient { rank: usize, required: usize },
    #[error("matrix is zero")]
    ZeroMatrix,
    #[error("innovation matrix is singular at step {step}")]
    SingularInnovation { step: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("pair is not controllable (rank {rank} < {dim})")]
    NotControllable { rank: usize, dim: usize },
    #[error("error covariance is near singular (min eigenvalue {min_eig:e})")]
    SigmaNearSingular { min_eig: f64 },
    #[error("state dimension {d0} is not a multiple of the leader rank {r}")]
    NonIntegerPeriod { d0: usize, r: usize },
    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("heuristic base must lie in (0, 1], got {0}")]
    InvalidTheta(f64),
    #[error("signalling power entry {index} is {value:e}, gradient needs it positive")]
    ZeroLambdaEntry { index: usize, value: f64 },
    #[error("no root of the stationarity equation at step {step} on [{lo:e}, {hi:e}] (residual {at_lo:e} .. {at_hi:e})")]
    NoRootFound {
        step: usize,
        lo: f64,
        hi: f64,
        at_lo: f64,
        at_hi: f64,
    },
    #[error("policy does not match the channel: {0}")]
    PolicyMismatch(String),
    #[error("rollout {run} failed: {source}")]
    RolloutFailed { run: usize, source: Box<Error> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
