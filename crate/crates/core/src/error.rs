use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its domain (probability outside [0, 1], negative flux, ...).
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("trace of {len} samples is shorter than one period ({period} samples)")]
    TraceTooShort { len: usize, period: usize },

    #[error("bias {v_dc} V outside the modeled range [{min}, {max}] V")]
    BiasOutOfRange { v_dc: f64, min: f64, max: f64 },

    #[error("histogram has {total} counts, at least {required} are needed for a fit")]
    InsufficientCounts { total: u64, required: u64 },

    #[error(
        "no crossing between peaks {lower} and {upper} inside ({lower_mean}, {upper_mean}) mV"
    )]
    NoCrossing {
        lower: usize,
        upper: usize,
        lower_mean: f64,
        upper_mean: f64,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("{p} is not a probability in [0, 1]"),
        ))
    }
}

pub(crate) fn check_nonnegative(name: &'static str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{x} must be finite and >= 0")))
    }
}
