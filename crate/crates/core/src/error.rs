use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite state encountered at t = {t} min")]
    NonFinite { t: f64 },

    #[error("time {t} outside stored range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("no sign change of the equilibrium balance in [{lo:e}, {hi:e}] mg/dl")]
    NoEquilibrium { lo: f64, hi: f64 },

    #[error("equilibrium residual {residual:e} exceeds certification tolerance")]
    Uncertified { residual: f64 },

    #[error("Hopf curve existence condition violated: {0}")]
    Existence(String),

    #[error("frequency {omega} outside the Hopf curve domain")]
    OutsideDomain { omega: f64 },

    #[error("trajectory span {span} min too short; need at least {needed} min")]
    SpanTooShort { span: f64, needed: f64 },

    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
