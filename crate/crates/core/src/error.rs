use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid prior at position {position}: {reason}")]
    InvalidPrior { position: usize, reason: String },

    #[error("invalid constellation: {0}")]
    Constellation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no usable eigenmode: every channel gain is zero")]
    NoUsableEigenmode,

    /// The detector's MMSE equals (or exceeds) the prior variance, so the
    /// channel carries no information about the block.
    #[error("no extrinsic information (mmse {mmse:e} >= prior variance {variance:e})")]
    NoExtrinsicInformation { mmse: f64, variance: f64 },

    #[error("transfer curve is not monotone on [{lo}, {hi}]")]
    NonMonotone { lo: f64, hi: f64 },

    #[error("curve is not differentiable near rho = {at} (jump of {jump:e})")]
    NotDifferentiable { at: f64, jump: f64 },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("quadrature failed to reach tolerance: value {value:e}, error estimate {error:e}")]
    Quadrature { value: f64, error: f64 },

    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
