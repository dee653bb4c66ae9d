use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Input,
    Format,
    Io,
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("format error in {file}: {msg}")]
    Format { file: String, msg: String },
    #[error("i/o error on {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

impl CodecError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CodecError::Config(_) => ErrorKind::Config,
            CodecError::Input(_) => ErrorKind::Input,
            CodecError::Format { .. } => ErrorKind::Format,
            CodecError::Io { .. } => ErrorKind::Io,
        }
    }

    pub fn io(file: impl Into<String>, source: std::io::Error) -> Self {
        CodecError::Io {
            file: file.into(),
            source,
        }
    }

    pub fn format(file: impl Into<String>, msg: impl Into<String>) -> Self {
        CodecError::Format {
            file: file.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CodecError>;
