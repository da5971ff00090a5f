use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data that can never be valid (NaN, infinities, malformed files).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A caller violated an operation's precondition (shape, range, config).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Paper-mode transport whose denominator `1 - c<u,w>` vanished.
    #[error("transport singularity: 1 - c*<u,w> = {denominator:e} with <u,w> = {inner:e}")]
    Singularity { inner: f64, denominator: f64 },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: usize },

    /// Training produced a non-finite loss.
    #[error("divergence at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code used by the CLI: 2 for divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 2,
            _ => 1,
        }
    }
}

pub(crate) fn ensure_finite(context: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            context: context.to_string(),
            index,
        }),
        None => Ok(()),
    }
}
