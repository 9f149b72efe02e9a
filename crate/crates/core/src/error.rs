use thiserror::Error;

/// Errors raised by the channel model, detectors, estimators and numeric kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("observation time {t} s is not after the release time {release} s")]
    NonPositiveObservationTime { t: f64, release: f64 },

    #[error("hypothesis {hypothesis} has zero mean count at sample {sample}")]
    ZeroMeanCount { hypothesis: usize, sample: usize },

    #[error("hypotheses {0} and {1} produce identical mean counts")]
    DegenerateHypotheses(usize, usize),

    #[error("exact enumeration over {samples} samples exceeds the limit of {limit}")]
    EnumerationTooLarge { samples: usize, limit: usize },

    #[error("hypotheses {0} and {1} have equal total mean counts")]
    EqualRowSums(usize, usize),

    #[error("search window [{lo}, {hi}] is empty")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("no root of the stationarity condition inside [{lo}, {hi}]")]
    NoRootInWindow { lo: f64, hi: f64 },

    #[error("no sign change on [{a}, {b}]: f(a) = {fa}, f(b) = {fb}")]
    Bracket { a: f64, fa: f64, b: f64, fb: f64 },

    #[error("root finder did not converge in {0} iterations")]
    RootNoConvergence(usize),

    #[error("posterior mass underflows")]
    DegeneratePosterior,

    #[error("observation {0} has zero prior variance")]
    ZeroVariance(usize),

    #[error("zero-information velocity {v} m/s lies inside the prior support")]
    SingularityInRange { v: f64 },

    #[error("boundary value solve did not converge (residual {residual:e} after {iterations} Newton steps)")]
    BvpNoConvergence { iterations: usize, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
