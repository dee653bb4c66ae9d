use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Input,
    Format,
    Io,
    Internal,
}

#[derive(Debug, Error)]
pub enum EvalError {
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
    #[error(transparent)]
    Train(#[from] mgdm_train::TrainError),
    #[error(transparent)]
    Codec(#[from] mgdm_codec::CodecError),
}

impl EvalError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            EvalError::Input(_) => ErrorKind::Input,
            EvalError::Format { .. } => ErrorKind::Format,
            EvalError::Io { .. } => ErrorKind::Io,
            EvalError::Train(e) => match e.kind() {
                mgdm_train::ErrorKind::Config => ErrorKind::Config,
                mgdm_train::ErrorKind::Input => ErrorKind::Input,
                mgdm_train::ErrorKind::Format => ErrorKind::Format,
                mgdm_train::ErrorKind::Io => ErrorKind::Io,
                mgdm_train::ErrorKind::Internal => ErrorKind::Internal,
            },
            EvalError::Codec(e) => match e.kind() {
                mgdm_codec::ErrorKind::Config => ErrorKind::Config,
                mgdm_codec::ErrorKind::Input => ErrorKind::Input,
                mgdm_codec::ErrorKind::Format => ErrorKind::Format,
                mgdm_codec::ErrorKind::Io => ErrorKind::Io,
            },
        }
    }

    pub fn io(file: impl Into<String>, source: std::io::Error) -> Self {
        EvalError::Io {
            file: file.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;
