use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument modulus {modulus} exceeds the evaluation cap {cap}")]
    ArgumentTooLarge { modulus: f64, cap: f64 },

    #[error("loss of accuracy in {context}")]
    AccuracyLoss { context: String },

    #[error("non-finite value produced in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("ellipticity violated: min a = {min_a} < kappa = {kappa}")]
    Ellipticity { min_a: f64, kappa: f64 },

    #[error("eigenvalue iteration did not converge within {iterations} sweeps")]
    ConvergenceFailure { iterations: usize },

    #[error("observation mask captures no grid node")]
    EmptyMask,

    #[error("observation intervals overlap: [{0}, {1}] and [{2}, {3}]")]
    OverlappingIntervals(f64, f64, f64, f64),

    #[error("design matrix is rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}); use gamma > 0")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("temporal factor rho vanishes identically")]
    DegenerateTemporalFactor,

    #[error("generating datum vanishes identically")]
    ZeroDatum,

    #[error("empty order bracket ({lo}, {hi})")]
    EmptyBracket { lo: f64, hi: f64 },

    #[error("misfit landscape is flat over the order bracket")]
    FlatLandscape,

    #[error("contour radius {radius} is not below half the gap {half_gap} to the nearest other pole")]
    ContourRadius { radius: f64, half_gap: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected,
                found,
            })
        }
    }
}
