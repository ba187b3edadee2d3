use thiserror::Error;

/// Failures raised by the numerical layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: estimate {value:e} with error {error:e} after {subdivisions} subdivisions")]
    NonConvergence {
        value: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("integrand tail decays too slowly (power {power}) for a finite tail integral")]
    SlowDecay { power: f64 },

    #[error("integrand grows faster than x^2 at the origin of the jump measure")]
    GrowthAtOrigin,

    #[error("non-finite integrand value at {at}")]
    NonFinite { at: f64 },

    #[error("kernel {label} fails condition {condition}: {detail}")]
    KernelClass {
        label: String,
        condition: String,
        detail: String,
    },

    #[error("expected number of jumps {expected:e} exceeds the simulation limit")]
    TooManyJumps { expected: f64 },

    #[error("moment gate failed: {0}")]
    MomentGate(String),

    #[error("weight variance {variance:.3} of test functional `{name}` exceeds the cap {cap}")]
    WeightGate { name: String, variance: f64, cap: f64 },

    #[error("Fourier route not available: {0}")]
    FourierRoute(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
