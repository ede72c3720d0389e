use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration key `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error(transparent)]
    Numerical(#[from] viscolab::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema { .. } => 2,
            _ => 1,
        }
    }
}

pub(crate) fn schema(key: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Schema {
        key: key.into(),
        message: message.into(),
    }
}
