#![no_main]

use libfuzzer_sys::fuzz_target;
use phasorgrid_core::Perturbation;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = std::str::from_utf8(data) else { return };
    let _ = Perturbation::parse(spec, None);
    let _ = Perturbation::parse(spec, Some((1.0, 2.0)));
});
