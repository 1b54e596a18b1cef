//! Arbitrary text as a grid file. Accepted grids must survive a write/read round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use phasorgrid_core::{read_powergrid, write_powergrid};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = read_powergrid(text) {
        let again = read_powergrid(&write_powergrid(&grid)).expect("written grid reads back");
        assert!(again == grid);
        let _ = grid.validate();
    }
});
