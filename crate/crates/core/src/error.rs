use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid weak convexity modulus {0}: must be finite and nonnegative")]
    InvalidModulus(f64),

    #[error("invalid constraint set: lower bound exceeds upper bound at coordinate {0}")]
    InvalidSet(usize),

    #[error("closed-form prox only available for q = 1/2 outside the quadratic region (q = {0})")]
    UnsupportedExponent(f64),

    #[error("subgradient undefined at the initial point of block {0}; supply an explicit initial state")]
    Initialization(usize),

    #[error("natural map vanishes: the state is already a solution")]
    AtSolution,

    #[error("step-size bound violated at iteration {iteration}: {detail}")]
    BoundViolation { iteration: usize, detail: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("diagnostic input insufficient: {0}")]
    Diagnostic(String),

    #[error("Fejer check refused: weak convexity modulus {0} > 0 requires an explicit constant")]
    FejerNeedsConstant(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
