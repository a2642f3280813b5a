use std::time::Duration;

use kw_core::api::{AudioReceipt, CreateSession, EndSession, EventBatch, IngestReceipt, SessionCreated, API_PREFIX};
use serde::de::DeserializeOwned;
use ureq::http::Response;
use ureq::{Agent, Body};

use crate::api::{ApiError, IngestApi};

/// Blocking HTTP client for the ingest service.
#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: Agent,
    base: String,
    token: Option<String>,
}

impl HttpClient {
    pub fn new(server_url: &str, token: Option<String>) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self { agent, base: server_url.trim_end_matches('/').to_string(), token }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{API_PREFIX}{path}", self.base)
    }

    fn auth(&self) -> Option<String> {
        self.token.as_ref().map(|t| format!("Bearer {t}"))
    }

    fn post(&self, path: &str) -> ureq::RequestBuilder<ureq::typestate::WithBody> {
        let mut req = self.agent.post(self.url(path));
        if let Some(a) = self.auth() {
            req = req.header("Authorization", a);
        }
        req
    }
}

fn transport(e: ureq::Error) -> ApiError {
    ApiError::Transport(e.to_string())
}

fn read<T: DeserializeOwned>(mut resp: Response<Body>) -> Result<T, ApiError> {
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_string().map_err(transport)?;
    if !(200..300).contains(&status) {
        return Err(ApiError::Status { status, body });
    }
    serde_json::from_str(&body).map_err(|e| ApiError::Decode(format!("{e}: {body}")))
}

impl IngestApi for HttpClient {
    fn create_session(&self, req: &CreateSession, idempotency_key: &str) -> Result<SessionCreated, ApiError> {
        let resp =
            self.post("/sessions").header("Idempotency-Key", idempotency_key).send_json(req).map_err(transport)?;
        read(resp)
    }

    fn post_events(&self, session_id: &str, batch: &EventBatch) -> Result<IngestReceipt, ApiError> {
        let resp = self.post(&format!("/sessions/{session_id}/events")).send_json(batch).map_err(transport)?;
        read(resp)
    }

    fn post_audio(
        &self,
        session_id: &str,
        start_ms: u64,
        end_ms: u64,
        wav: &[u8],
        idempotency_key: &str,
    ) -> Result<AudioReceipt, ApiError> {
        let resp = self
            .post(&format!("/sessions/{session_id}/audio?start_ms={start_ms}&end_ms={end_ms}"))
            .header("Content-Type", "audio/wav")
            .header("Idempotency-Key", idempotency_key)
            .send(wav)
            .map_err(transport)?;
        read(resp)
    }

    fn end_session(&self, session_id: &str, req: &EndSession) -> Result<(), ApiError> {
        let resp = self.post(&format!("/sessions/{session_id}/end")).send_json(req).map_err(transport)?;
        read::<serde_json::Value>(resp).map(|_| ())
    }
}
