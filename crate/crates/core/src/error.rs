use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid control: {0}")]
    InvalidControl(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectory blew up at t = {time}; last finite state {last_state:?}")]
    BlowUp { time: f64, last_state: Vec<f64> },
    #[error("eigenvalue computation failed (condition estimate {condition:e})")]
    EigenFailure { condition: f64 },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("point is not on the level at infinity")]
    NotAtInfinity,
    #[error("memory budget exceeded: {requested} cells requested, cap is {cap}")]
    MemoryCap { requested: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
