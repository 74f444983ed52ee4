use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    /// `psi` evaluated exactly on its pole `xi = beta / alpha`.
    #[error("psi evaluated on its pole xi = beta/alpha = {0}")]
    Pole(f64),

    #[error("chemoattractant must be strictly positive (site {site}, value {value})")]
    NonPositiveField { site: usize, value: f64 },

    #[error("invalid logarithm argument {0}")]
    LogDomain(f64),

    #[error("CFL violation: dt = {dt} exceeds limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("run aborted: {0}")]
    Aborted(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
