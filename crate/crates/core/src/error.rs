use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("delay {delay} ms of `{name}` is not a positive multiple of dt = {dt} ms")]
    OffGridDelay { name: &'static str, delay: f64, dt: f64 },

    #[error("invalid sequence program: {0}")]
    InvalidProgram(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam { name, reason: reason.into() }
}
