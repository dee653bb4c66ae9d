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
pub enum TrainError {
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
    #[error(transparent)]
    Codec(#[from] mgdm_codec::CodecError),
    #[error(transparent)]
    Model(#[from] mgdm_model::ModelError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl TrainError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            TrainError::Config(_) => ErrorKind::Config,
            TrainError::Input(_) => ErrorKind::Input,
            TrainError::Format { .. } => ErrorKind::Format,
            TrainError::Io { .. } => ErrorKind::Io,
            TrainError::Codec(e) => match e.kind() {
                mgdm_codec::ErrorKind::Config => ErrorKind::Config,
                mgdm_codec::ErrorKind::Input => ErrorKind::Input,
                mgdm_codec::ErrorKind::Format => ErrorKind::Format,
                mgdm_codec::ErrorKind::Io => ErrorKind::Io,
            },
            TrainError::Model(e) => match e.kind() {
                mgdm_model::ErrorKind::Config => ErrorKind::Config,
                mgdm_model::ErrorKind::Input => ErrorKind::Input,
            },
            TrainError::Internal(_) => ErrorKind::Internal,
        }
    }

    pub fn io(file: impl Into<String>, source: std::io::Error) -> Self {
        TrainError::Io {
            file: file.into(),
            source,
        }
    }

    pub fn format(file: impl Into<String>, msg: impl Into<String>) -> Self {
        TrainError::Format {
            file: file.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;
