use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An observation or input value that cannot enter the accumulators.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A statistic was requested before enough observations exist to define it.
    #[error("estimate undefined: {0}")]
    UndefinedEstimate(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no sign change on bracket [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("iteration limit of {0} exceeded")]
    MaxIterations(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Reporting was requested while the monitored experiment is still running.
    #[error("experiment has not stopped")]
    NotStopped,
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("{value} is not in (0, 1)")))
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("{value} is not a finite positive number")))
    }
}
