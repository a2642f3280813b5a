#![no_main]

use kw_gateway::Spool;
use libfuzzer_sys::fuzz_target;

const SESSION: &str = r#"{"session_id":"s","device_id":"d","started_at":"2026-01-01T00:00:00Z"}"#;

// The input becomes the pending log of an otherwise valid spool directory.
fuzz_target!(|data: &[u8]| {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("session.json"), SESSION).unwrap();
    std::fs::write(dir.path().join("pending.jsonl"), data).unwrap();
    if let Ok(spool) = Spool::open(dir.path()) {
        let unacked = spool.unacked();
        assert!(unacked.windows(2).all(|w| w[0].seq < w[1].seq));
    }
});
