#![no_main]

use kw_core::event::GatewayEvent;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ev) = GatewayEvent::from_json(text) {
        let again = GatewayEvent::from_json(&serde_json::to_string(&ev).unwrap()).unwrap();
        assert_eq!(again, ev);
    }
});
