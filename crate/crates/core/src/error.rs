use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("coordinate {coordinate} = {value} lies outside the open support")]
    OutsideSupport { coordinate: usize, value: f64 },

    #[error("quadrature did not converge: achieved relative error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("self-normalized weights are degenerate (effective sample size {ess:.2})")]
    DegenerateWeights { ess: f64 },

    #[error("rejection sampler acceptance rate {rate:.3e} is below 1e-4")]
    RejectionFailure { rate: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("averaged localization matrix is numerically singular at step {step} (condition number {condition:.3e})")]
    SingularStep { step: usize, condition: f64 },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("only {hits} tail hits observed (need at least 30); rerun with at least {suggested_reps} replications")]
    InsufficientTail { hits: u64, suggested_reps: u64 },

    #[error("x = {x} lies outside the admissible window [0, {upper:.6}] (n = {n})")]
    OutsideWindow { x: f64, upper: f64, n: usize },

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the configuration rather than by the run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::Precondition(_) | Error::OutsideWindow { .. } | Error::Json(_))
    }

    pub(crate) fn at_step(step: usize, source: Error) -> Self {
        Error::AtStep {
            step,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
