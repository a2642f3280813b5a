#![allow(dead_code)]

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use kw_cloud::{router, AppState, Store};
use kw_core::event::{EventPayload, GatewayEvent, InstantaneousPayload, SummaryPayload};
use kw_core::SnoreClass;
use tower::ServiceExt;

pub fn app(dir: &std::path::Path) -> Router {
    let store = Store::open(dir).unwrap();
    router(AppState { store: Arc::new(store), token: None, faults: None })
}

pub fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.into())
            .unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        (status, bytes.to_vec())
    })
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

pub fn create(app: &Router, device: &str, started_at: &str) -> String {
    let body = format!(r#"{{"device_id":"{device}","started_at":"{started_at}"}}"#);
    let (status, bytes) = call(app, "POST", "/api/v1/sessions", body);
    assert_eq!(status, StatusCode::CREATED);
    json(&bytes)["session_id"].as_str().unwrap().to_string()
}

pub fn inst(seq: u64, t: u64, p: f64) -> GatewayEvent {
    GatewayEvent::new(
        "kw-01",
        seq,
        t,
        EventPayload::ActivityInstantaneous(InstantaneousPayload { p_snore: p, p_non_snore: 1.0 - p }),
    )
}

pub fn summary(seq: u64, t: u64, class: SnoreClass) -> GatewayEvent {
    GatewayEvent::new(
        "kw-01",
        seq,
        t,
        EventPayload::ActivitySummary(SummaryPayload {
            window_start_ms: t,
            window_end_ms: t + 1000,
            class,
            episode_count: 0,
        }),
    )
}

pub fn batch(events: &[GatewayEvent]) -> String {
    serde_json::to_string(&kw_core::api::EventBatch { events: events.to_vec() }).unwrap()
}
