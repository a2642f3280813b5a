#![no_main]

use kw_core::detector::{read_trace_csv, write_trace_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_trace_csv(data) {
        let mut out = Vec::new();
        write_trace_csv(&rows, &mut out).unwrap();
        let again = read_trace_csv(&out[..]).unwrap();
        assert_eq!(again.len(), rows.len());
    }
});
