#![no_main]

use libfuzzer_sys::fuzz_target;
use phasorgrid_core::scenario::parse_span;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok((a, b)) = parse_span(s) {
        assert!(a.is_finite() && b.is_finite());
    }
});
