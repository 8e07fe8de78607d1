use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    #[error("unknown criterion `{0}` (expected one of P50, P95, G260, G540)")]
    UnknownCriterion(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("need at least {required} exact readings, found {found}")]
    TooFewExact { required: usize, found: usize },

    #[error("censored fraction {fraction:.3} exceeds the limit {limit:.3}")]
    TooMuchCensoring { fraction: f64, limit: f64 },

    #[error(
        "imputation did not converge after {iterations} iterations (last change {last_change:e})"
    )]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("time span of the series is zero; a trend cannot be fitted")]
    DegenerateTimeSpan,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}
