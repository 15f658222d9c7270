#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(sys) = weakoe::harness::parse_system(text) {
            let repr = sys.to_repr();
            let back = weakoe::actions::FreeProductSystem::from_repr(&repr).unwrap();
            assert_eq!(back.to_repr(), repr);
        }
    }
});
