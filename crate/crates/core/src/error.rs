use thiserror::Error;

/// Errors raised by the simulation and optimization routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fractional tap rejected: {0}")]
    FractionalTap(String),

    #[error("delay tap {tap} does not fit a grid with {m} delay bins")]
    DelayOverflow { tap: usize, m: usize },

    #[error("duplicate (delay, doppler) pair ({delay}, {doppler}) persisted after {attempts} Doppler re-draws")]
    TapCollision {
        delay: usize,
        doppler: i64,
        attempts: usize,
    },

    #[error("multiple-access scheme {scheme}: {reason}")]
    Divisibility {
        scheme: &'static str,
        reason: String,
    },

    #[error("profile parse error: {0}")]
    ProfileParse(String),

    #[error("subproblem infeasible: {0}")]
    Infeasible(String),

    #[error("solver hit its iteration limit ({iterations}); residuals: stationarity {stationarity:.3e}, complementarity {complementarity:.3e}")]
    IterationLimit {
        iterations: usize,
        stationarity: f64,
        complementarity: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("penalty CCP iteration {iteration}: {source}")]
    Ccp {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("zero correlation between repeated pilot symbols")]
    ZeroCorrelation,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(
    context: &'static str,
    expected: impl ToString,
    got: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
