#![no_main]

use kw_core::nn::{decode_params, encode_params};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = decode_params(data) {
        assert_eq!(encode_params(&params), data);
    }
});
