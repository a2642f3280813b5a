mod common;

use axum::http::StatusCode;
use common::*;
use kw_core::audio::{encode_wav, AudioClip};
use kw_core::SnoreClass;

const T0: &str = "2026-03-01T22:00:00Z";
const T0_MS: u64 = 1_772_402_400_000;

#[test]
fn healthz() {
    let tmp = tempfile::tempdir().unwrap();
    let (status, body) = call(&app(tmp.path()), "GET", "/healthz", "");
    assert_eq!((status, body.as_slice()), (StatusCode::OK, b"ok".as_slice()));
}

#[test]
fn session_creation() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let a = create(&app, "kw-01", T0);
    let b = create(&app, "kw-01", T0);
    assert_ne!(a, b);
    let (status, _) = call(&app, "POST", "/api/v1/sessions", "{not json");
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/api/v1/sessions", r#"{"device_id":"kw-01"}"#);
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&app, "GET", &format!("/api/v1/sessions/{a}"), "");
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["status"], "open");
}

#[test]
fn event_ingestion_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = create(&app, "kw-01", T0);
    let uri = format!("/api/v1/sessions/{id}/events");
    let events: Vec<_> = (0..100).map(|i| inst(i, T0_MS + i * 333, 0.25)).collect();

    let (status, body) = call(&app, "POST", &uri, batch(&events));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body), serde_json::json!({"accepted": 100, "duplicates": 0}));

    let (_, body) = call(&app, "POST", &uri, batch(&events));
    assert_eq!(json(&body), serde_json::json!({"accepted": 0, "duplicates": 100}));

    let (status, _) = call(&app, "POST", &uri, batch(&[inst(7, T0_MS, 0.5)]));
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, _) = call(&app, "POST", "/api/v1/sessions/nope/events", batch(&events));
    assert_eq!(status, StatusCode::NOT_FOUND);

    let mut bad = inst(500, T0_MS, 0.25);
    bad.device_id = "someone-else".into();
    assert_eq!(call(&app, "POST", &uri, batch(&[bad])).0, StatusCode::BAD_REQUEST);
    let wrong_type = r#"{"events":[{"device_id":"kw-01","seq":900,"type":"alerting","timestamp_ms":1,"payload":{"p_snore":0.5,"p_non_snore":0.5}}]}"#;
    assert_eq!(call(&app, "POST", &uri, wrong_type).0, StatusCode::BAD_REQUEST);

    let (_, body) = call(&app, "GET", &uri, "");
    let stored: kw_core::api::EventBatch = serde_json::from_slice(&body).unwrap();
    assert_eq!(stored.events, events);

    assert_eq!(call(&app, "POST", &format!("/api/v1/sessions/{id}/end"), "").0, StatusCode::OK);
    assert_eq!(call(&app, "POST", &uri, batch(&[inst(100, T0_MS, 0.5)])).0, StatusCode::CONFLICT);
}

#[test]
fn audio_segments() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = create(&app, "kw-01", T0);
    let clip = AudioClip::new((0..320_000).map(|i| ((i % 200) as f32 / 100.0 - 1.0) * 0.5).collect(), 16_000).unwrap();
    let wav = encode_wav(&clip);

    let (status, body) =
        call(&app, "POST", &format!("/api/v1/sessions/{id}/audio?start_ms=25000&end_ms=45000"), wav.clone());
    assert_eq!(status, StatusCode::CREATED);
    let audio_id = json(&body)["audio_id"].as_str().unwrap().to_string();
    let (status, body) = call(&app, "GET", &format!("/api/v1/audio/{audio_id}"), "");
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, wav);

    let (status, _) =
        call(&app, "POST", &format!("/api/v1/sessions/{id}/audio?start_ms=45000&end_ms=45000"), wav.clone());
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) =
        call(&app, "POST", &format!("/api/v1/sessions/{id}/audio?start_ms=0&end_ms=10"), b"RIFF....WAVE".to_vec());
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", &format!("/api/v1/sessions/{id}/audio?start_ms=0"), wav);
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[test]
fn session_end_lifecycle() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = create(&app, "kw-01", T0);
    let uri = format!("/api/v1/sessions/{id}/end");
    let (status, body) = call(&app, "POST", &uri, r#"{"ended_at":"2026-03-02T06:00:00Z"}"#);
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["status"], "closed");
    assert_eq!(call(&app, "POST", &uri, "").0, StatusCode::CONFLICT);
    assert_eq!(call(&app, "POST", "/api/v1/sessions/nope/end", "").0, StatusCode::NOT_FOUND);
    let other = create(&app, "kw-01", T0);
    let early = r#"{"ended_at":"2026-03-01T21:00:00Z"}"#;
    assert_eq!(call(&app, "POST", &format!("/api/v1/sessions/{other}/end"), early).0, StatusCode::BAD_REQUEST);
}

#[test]
fn summary_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = create(&app, "kw-01", T0);
    let uri = format!("/api/v1/sessions/{id}/summary");
    assert_eq!(call(&app, "GET", &uri, "").0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(call(&app, "GET", "/api/v1/sessions/nope/summary", "").0, StatusCode::NOT_FOUND);

    let min = 60_000;
    let events = [
        summary(0, T0_MS, SnoreClass::NonSnoring),
        summary(1, T0_MS + 60 * min, SnoreClass::Snoring),
        summary(2, T0_MS + 65 * min, SnoreClass::NonSnoring),
        summary(3, T0_MS + 200 * min, SnoreClass::Snoring),
        summary(4, T0_MS + 205 * min, SnoreClass::NonSnoring),
    ];
    call(&app, "POST", &format!("/api/v1/sessions/{id}/events"), batch(&events));
    call(&app, "POST", &format!("/api/v1/sessions/{id}/end"), r#"{"ended_at":"2026-03-02T06:00:00Z"}"#);
    let (status, body) = call(&app, "GET", &uri, "");
    assert_eq!(status, StatusCode::OK);
    let s = json(&body);
    assert_eq!(s["duration_min"], 480.0);
    assert_eq!(s["episode_count"], 2);
    assert_eq!(s["snore_minutes"], 10.0);
    assert!((s["snore_fraction"].as_f64().unwrap() - 0.0208).abs() < 1e-4);
    // Episodes start at 23:00 and 01:20 UTC.
    assert_eq!(s["hourly_snore_histogram"][23], 1);
    assert_eq!(s["hourly_snore_histogram"][1], 1);

    // Same store, same bytes, including after a restart.
    let (_, again) = call(&app, "GET", &uri, "");
    assert_eq!(body, again);
    let (_, reopened) = call(&common::app(tmp.path()), "GET", &uri, "");
    assert_eq!(body, reopened);
}

#[test]
fn trends_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let min = 60_000;
    for (night, minutes) in [10u64, 12, 14, 16].into_iter().enumerate() {
        let day = 1 + night;
        let id = create(&app, "kw-01", &format!("2026-03-{day:02}T22:00:00Z"));
        let start = T0_MS + night as u64 * 86_400_000;
        let events = [
            summary(0, start + min, SnoreClass::Snoring),
            summary(1, start + min + minutes * min, SnoreClass::NonSnoring),
        ];
        call(&app, "POST", &format!("/api/v1/sessions/{id}/events"), batch(&events));
    }
    let (status, body) = call(&app, "GET", "/api/v1/trends?device_id=kw-01", "");
    assert_eq!(status, StatusCode::OK);
    let r = json(&body);
    assert_eq!(r["series"].as_array().unwrap().len(), 4);
    assert!((r["slope_min_per_night"].as_f64().unwrap() - 2.0).abs() < 1e-9);

    let (_, body) = call(&app, "GET", "/api/v1/trends?device_id=kw-01&from=2026-03-02&to=2026-03-02", "");
    let r = json(&body);
    assert_eq!(r["series"].as_array().unwrap().len(), 1);
    assert_eq!(r["slope_min_per_night"], 0.0);

    let (status, body) = call(&app, "GET", "/api/v1/trends?device_id=kw-01&from=2027-01-01&to=2027-02-01", "");
    assert_eq!(status, StatusCode::OK);
    assert!(json(&body)["series"].as_array().unwrap().is_empty());
}

#[test]
fn bearer_token_and_fault_injection() {
    use std::sync::Arc;
    let tmp = tempfile::tempdir().unwrap();
    let store = Arc::new(kw_cloud::Store::open(tmp.path()).unwrap());
    let app = kw_cloud::router(kw_cloud::AppState { store: store.clone(), token: Some("s3cret".into()), faults: None });
    assert_eq!(call(&app, "GET", "/api/v1/trends?device_id=x", "").0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, "GET", "/healthz", "").0, StatusCode::OK);

    let faulty = kw_cloud::router(kw_cloud::AppState {
        store,
        token: None,
        faults: Some(Arc::new(kw_cloud::FaultInjector::new(0.5, 9))),
    });
    let codes: Vec<StatusCode> = (0..200).map(|_| call(&faulty, "GET", "/api/v1/trends?device_id=x", "").0).collect();
    let failed = codes.iter().filter(|&&c| c == StatusCode::SERVICE_UNAVAILABLE).count();
    assert!((70..130).contains(&failed), "{failed} of 200");
    assert!(codes.iter().all(|&c| c == StatusCode::OK || c == StatusCode::SERVICE_UNAVAILABLE));
}
