use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] timemap_core::Error),

    #[error("invalid harvest job: {0}")]
    InvalidJob(String),

    #[error("invalid proxy config: {0}")]
    InvalidConfig(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("http client: {0}")]
    Client(String),
}
