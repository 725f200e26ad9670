use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("density is unbounded: {0}")]
    Singularity(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GlError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(GlError::Domain(msg.into()))
}

pub(crate) fn ensure_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be finite, got {x}"))
    }
}
