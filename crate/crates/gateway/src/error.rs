use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("authentication rejected by {backend} backend: {message}")]
    Auth { backend: String, message: String },
    #[error("rate limited by {backend} backend")]
    RateLimited {
        backend: String,
        retry_after: Option<Duration>,
    },
    #[error("{backend} backend returned status {status}: {message}")]
    Backend {
        backend: String,
        status: u16,
        message: String,
    },
    #[error("request to {backend} backend timed out")]
    Timeout { backend: String },
    #[error("text is empty")]
    EmptyText,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{backend} backend is not configured")]
    NotConfigured { backend: String },
    #[error("malformed response from {backend} backend: {message}")]
    MalformedResponse { backend: String, message: String },
    #[error("cache i/o: {0}")]
    CacheIo(#[from] std::io::Error),
}

impl GatewayError {
    /// Whether a retry with backoff may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::RateLimited { .. } | GatewayError::Timeout { .. } => true,
            GatewayError::Backend { status, .. } => *status >= 500 || *status == 408,
            _ => false,
        }
    }

    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            GatewayError::RateLimited { retry_after, .. } => *retry_after,
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, GatewayError>;
