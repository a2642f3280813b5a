#![no_main]

use kw_cloud::Store;
use libfuzzer_sys::fuzz_target;

// The input becomes the session log of a data directory.
fuzz_target!(|data: &[u8]| {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sessions.jsonl"), data).unwrap();
    if let Ok(store) = Store::open(dir.path()) {
        for s in store.sessions() {
            let _ = store.snapshot(&s.session_id);
        }
    }
});
