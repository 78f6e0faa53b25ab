use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate proposal: weight profile has no mass on the support")]
    DegenerateProposal,
    #[error("proposal violates support condition at t = {t}: q(t) = 0 while p(t) > 0")]
    SupportViolation { t: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("zero marginal inclusion probability for item {0}")]
    ZeroMarginal(usize),
    #[error("sinkhorn did not converge after {iters} iterations (marginal residual {residual:e})")]
    SinkhornNonConvergence { iters: usize, residual: f64 },
    #[error("iso-variance point unreachable: variance {0:e} outside the baseline range")]
    IsoVarianceUnreachable(f64),
    #[error("missing measured cost for (R={renders}, K={renoise})")]
    MissingCost { renders: usize, renoise: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
