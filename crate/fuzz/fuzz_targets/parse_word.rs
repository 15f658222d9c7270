#![no_main]

use libfuzzer_sys::fuzz_target;
use weakoe::groups::AbelianGroupSpec;

fuzz_target!(|data: &[u8]| {
    let specs = [
        AbelianGroupSpec::integers(),
        AbelianGroupSpec::new(2, vec![]).unwrap(),
        AbelianGroupSpec::new(0, vec![3]).unwrap(),
    ];
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = weakoe::harness::parse_word(text, &specs);
    }
});
