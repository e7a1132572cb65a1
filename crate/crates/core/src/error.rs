use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Random sequential adsorption ran out of attempts before placing every spin.
    #[error("sampler saturated: placed {placed} of {target} spins after {attempts} attempts")]
    Saturation {
        placed: usize,
        target: usize,
        attempts: usize,
    },

    #[error("coincident spins {i} and {j}: coupling is singular")]
    Singular { i: usize, j: usize },

    #[error("need at least {needed} spins, got {got}")]
    TooFewSpins { needed: usize, got: usize },

    #[error("{n} spins exceeds the exact-diagonalization limit of {limit}")]
    DimensionLimit { n: usize, limit: usize },

    #[error("step size underflow at t = {time} us (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no root in bracket [{lo}, {hi}] (residuals {f_lo:e}, {f_hi:e})")]
    NoRoot {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("fixed point not converged after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("fit did not converge: {0}")]
    FitNotConverged(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
