use thiserror::Error;

/// Errors raised by the precoding library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the supported configuration space.
    #[error("configuration error: {0}")]
    Config(String),
    /// Inputs with inconsistent shapes or missing pieces.
    #[error("usage error: {0}")]
    Usage(String),
    /// A numeric argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// The numerical machinery broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Usage(format!(
            "{what}: dimension mismatch (got {got}, expected {want})"
        )));
    }
    Ok(())
}
