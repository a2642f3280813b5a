use kw_core::api::{AudioReceipt, CreateSession, EndSession, EventBatch, IngestReceipt, SessionCreated};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApiError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ApiError {
    /// Server errors, throttling and transport failures are worth retrying;
    /// any other client error is final.
    pub fn is_retryable(&self) -> bool {
        match self {
            ApiError::Status { status, .. } => *status >= 500 || *status == 408 || *status == 429,
            ApiError::Transport(_) => true,
            ApiError::Decode(_) => false,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            ApiError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// The ingest service as seen by the gateway.
pub trait IngestApi: Send {
    fn create_session(&self, req: &CreateSession, idempotency_key: &str) -> Result<SessionCreated, ApiError>;

    fn post_events(&self, session_id: &str, batch: &EventBatch) -> Result<IngestReceipt, ApiError>;

    fn post_audio(
        &self,
        session_id: &str,
        start_ms: u64,
        end_ms: u64,
        wav: &[u8],
        idempotency_key: &str,
    ) -> Result<AudioReceipt, ApiError>;

    fn end_session(&self, session_id: &str, req: &EndSession) -> Result<(), ApiError>;
}

impl<T: IngestApi + Sync> IngestApi for &T {
    fn create_session(&self, req: &CreateSession, key: &str) -> Result<SessionCreated, ApiError> {
        (**self).create_session(req, key)
    }

    fn post_events(&self, session_id: &str, batch: &EventBatch) -> Result<IngestReceipt, ApiError> {
        (**self).post_events(session_id, batch)
    }

    fn post_audio(
        &self,
        session_id: &str,
        start_ms: u64,
        end_ms: u64,
        wav: &[u8],
        key: &str,
    ) -> Result<AudioReceipt, ApiError> {
        (**self).post_audio(session_id, start_ms, end_ms, wav, key)
    }

    fn end_session(&self, session_id: &str, req: &EndSession) -> Result<(), ApiError> {
        (**self).end_session(session_id, req)
    }
}
