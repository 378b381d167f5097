use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{0} is outside the admissible domain")]
    Domain(String),

    #[error("conformal factor vanishes at tau = {tau}; Liouville scaling is singular")]
    SingularScaling { tau: f64 },

    #[error("conformal time undefined: {0}")]
    ConformalTimeUndefined(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("no convergence after {iterations} iterations (last change {last_change:.3e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("step size underflow at tau = {t}")]
    StepUnderflow { t: f64 },

    #[error("contraction unattainable on window [{a}, {b}]")]
    ContractionUnattainable { a: f64, b: f64 },

    #[error("|tau| = {tau} exceeds the series radius guard {guard}")]
    RadiusExceeded { tau: f64, guard: f64 },

    #[error("non-integrable Riccati branch: {0}")]
    NonIntegrable(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("transmission path mismatch: {0}")]
    PathMismatch(String),

    #[error("mode {index}: {source}")]
    Mode {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_mode(self, index: usize) -> Self {
        Error::Mode {
            index,
            source: Box::new(self),
        }
    }
}
