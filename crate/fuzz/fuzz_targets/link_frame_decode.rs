#![no_main]

use kw_core::pam::LinkFrame;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = LinkFrame::decode(data) {
        assert_eq!(frame.encode(), data);
        let _ = frame.message();
    }
});
