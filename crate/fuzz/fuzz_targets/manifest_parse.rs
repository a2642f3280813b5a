#![no_main]

use kw_core::audio::{parse_manifest, write_manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = parse_manifest(data) {
        let mut out = Vec::new();
        write_manifest(&mut out, &entries).unwrap();
        if entries.iter().all(|e| e.path.to_str().is_some_and(|p| p.trim() == p)) {
            assert_eq!(parse_manifest(&out[..]).unwrap(), entries);
        }
    }
});
