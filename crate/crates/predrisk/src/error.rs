use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown family `{0}`; expected one of poisson, bernoulli-canonical, negbinomial-canonical(r), normal-location(sigma), normal-location-scale, mvn-location(p), mvn-scale(p)")]
    UnknownFamily(String),

    #[error("invalid hyperparameter for {family}: {reason}")]
    InvalidHyper { family: &'static str, reason: String },

    #[error("parameter {0:?} is outside the parameter domain or within 1e-6 of its boundary")]
    ParamOutsideDomain(Vec<f64>),

    #[error("Fisher information matrix is singular or not positive definite at {0:?}; the model is only usable where the information matrix is nonsingular and positive definite")]
    SingularFisher(Vec<f64>),

    #[error("posterior is not normalizable: {0}")]
    ImproperPosterior(String),

    #[error("prior `{0}` exposes no density evaluator, so no predictive can be formed from it")]
    DensityUnavailable(String),

    #[error("quadrature did not reach the requested tolerance (achieved {achieved:e}, requested {requested:e})")]
    QuadratureTolerance { achieved: f64, requested: f64 },

    #[error("exact risk enumeration needs a discrete family with an enumerable sufficient statistic; use the Monte Carlo estimator for `{0}`")]
    ExactRiskUnavailable(String),

    #[error("{0:.1}% of replicates hit a boundary maximum-likelihood estimate; more than 50% makes the estimate meaningless")]
    TooManyBoundaryExclusions(f64),

    #[error("excess-risk fit rejected: {0}")]
    FitRejected(String),

    #[error("invalid prior spec `{0}`; the grammar is: jeffreys | uniform | alpha:<real> | shrink:<real>")]
    InvalidPriorSpec(String),

    #[error("shrinkage exponent range (1 - p/2, 0) is empty for dimension p = {0}; a strictly superharmonic power prior exists only for p >= 3")]
    EmptyShrinkageRange(usize),

    #[error("cumulant tensor for partition {0} is unavailable")]
    MissingTensor(&'static str),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("operation `{op}` is not supported for family `{family}`: {reason}")]
    Unsupported {
        op: &'static str,
        family: String,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
