use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered: {0}")]
    NumericalDomain(String),

    #[error("method unsupported: {0}")]
    MethodUnsupported(String),

    #[error("outside the domain: {0}")]
    Domain(String),

    #[error("invalid contraction index: {0}")]
    Index(String),

    #[error("density too peaked for rejection sampling (acceptance rate {rate:.3e} below floor {floor:.3e})")]
    DensityTooPeaked { rate: f64, floor: f64 },

    #[error("kernel is not degenerate: marginal integral {value:.3e} at grid point {at:?}")]
    NotDegenerate { value: f64, at: Vec<f64> },

    #[error("kernel is not normalized: 2*||f||^2 = {0}")]
    NotNormalized(f64),

    #[error("empty sample")]
    EmptySample,

    #[error("duplicate point in configuration")]
    DuplicatePoint,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
