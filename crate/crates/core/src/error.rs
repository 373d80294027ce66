use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time step {dt:.4e} too coarse: {rate_name} * dt = {product:.3e} exceeds {limit}")]
    StepTooLarge {
        dt: f64,
        rate_name: &'static str,
        product: f64,
        limit: f64,
    },

    #[error("non-finite state at t = {t:.6e} a.u.")]
    NonFinite { t: f64 },

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("memory kernel does not decay: Re(kappa~) = {re:.3e}")]
    NonDecayingKernel { re: f64 },

    #[error("step size control failed at t = {t:.6e} a.u. ({reason})")]
    StepControl { t: f64, reason: &'static str },

    #[error("s-domain system is degenerate (determinant polynomial vanishes)")]
    DegenerateSystem,

    #[error("denominator roots are degenerate (min separation {separation:.3e}, threshold {threshold:.3e})")]
    DegenerateRoots { separation: f64, threshold: f64 },

    #[error("rational function is not strictly proper")]
    NotStrictlyProper,

    #[error("lag {lag:.4e} a.u. is out of range or not a multiple of dt")]
    LagOutOfRange { lag: f64 },

    #[error("unsupported moment order {0}; expected 2 or 3")]
    UnsupportedOrder(u32),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("evaluation time precedes pulse end")]
    TimeBeforePulseEnd,

    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
