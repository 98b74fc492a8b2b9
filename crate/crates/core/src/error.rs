use std::io;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("corrupt code: {0}")]
    CorruptCode(String),

    #[error("infeasible bit budget: {0}")]
    InfeasibleBudget(String),

    #[error("outside the valid regime: {0}")]
    OutOfRegime(String),

    #[error("codebook file: {0}")]
    CodebookFormat(String),

    #[error("idx file: {0}")]
    IdxFormat(String),

    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
