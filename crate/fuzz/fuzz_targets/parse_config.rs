#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = weakoe::harness::parse_config(text) {
            // a validated config must survive a round trip
            let again = serde_json::to_string(&cfg).unwrap();
            assert_eq!(weakoe::harness::parse_config(&again).unwrap(), cfg);
        }
    }
});
