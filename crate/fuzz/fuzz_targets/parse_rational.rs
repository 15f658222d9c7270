#![no_main]

use libfuzzer_sys::fuzz_target;
use weakoe::space::RationalMass;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(q) = RationalMass::parse(text) {
            assert_eq!(RationalMass::parse(&q.to_string()).unwrap(), q);
        }
    }
});
