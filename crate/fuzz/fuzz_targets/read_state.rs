#![no_main]

use libfuzzer_sys::fuzz_target;
use phasorgrid_core::{read_powergrid, read_state, write_state};

const GRID: &str = include_str!("../../grids/validation.json");

fuzz_target!(|data: &[u8]| {
    let grid = read_powergrid(GRID).expect("shipped grid");
    let text = String::from_utf8_lossy(data);
    if let Ok(state) = read_state(&text, &grid) {
        if state.values().iter().all(|v| v.is_finite()) {
            let again = read_state(&write_state(&state).expect("write"), &grid).expect("reads back");
            assert_eq!(again.values(), state.values());
        }
    }
});
