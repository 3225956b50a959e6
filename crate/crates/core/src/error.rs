use thiserror::Error;

use crate::optimizer::RefineResult;

/// Errors produced by the library.
///
/// Variants map onto the CLI's exit-code categories: domain/format/registration
/// problems are validation failures, `Io` is an I/O failure and `Diverged` is
/// numerical.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A point could not be projected (behind the camera, outside the model's domain).
    #[error("projection error: {0}")]
    Projection(String),

    /// A file was readable but its contents were malformed or violated an invariant.
    #[error("format error: {0}")]
    Format(String),

    #[error("registration failure: {0}")]
    Registration(String),

    /// Refinement produced a non-finite loss. Carries the last finite state.
    #[error("optimization diverged at step {step}")]
    Diverged {
        step: usize,
        last: Box<RefineResult>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
