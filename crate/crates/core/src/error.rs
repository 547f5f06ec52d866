use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("degenerate collision frame: v = v*")]
    DegenerateFrame,
    #[error("numerical failure in {what}: {detail}")]
    Numerical { what: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Input(msg.into()))
}
