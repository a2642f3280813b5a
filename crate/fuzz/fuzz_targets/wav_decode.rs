#![no_main]

use kw_core::audio::{decode_wav, encode_wav};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(clip) = decode_wav(data) {
        let again = decode_wav(&encode_wav(&clip)).expect("re-encoded clip decodes");
        assert_eq!(again.len(), clip.len());
        assert_eq!(again.sample_rate(), clip.sample_rate());
    }
});
