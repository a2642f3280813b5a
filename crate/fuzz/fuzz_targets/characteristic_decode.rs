#![no_main]

use kw_core::pam::{decode, encode};
use libfuzzer_sys::fuzz_target;

// First byte is the characteristic id, the rest the payload.
fuzz_target!(|data: &[u8]| {
    let Some((&id, payload)) = data.split_first() else { return };
    if let Ok(msg) = decode(id, payload) {
        assert_eq!(encode(&msg).unwrap(), payload);
        assert_eq!(msg.char_id() as u8, id);
    }
});
