#![allow(dead_code)]

use std::path::PathBuf;

use phasorgrid_core::{read_powergrid, PowerGrid};

pub const SHIPPED: &[&str] = &["slack_only", "two_bus", "validation", "ieee14"];

pub fn grid_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../grids")
        .join(format!("{name}.json"))
}

pub fn grid_text(name: &str) -> String {
    std::fs::read_to_string(grid_path(name)).unwrap()
}

pub fn load(name: &str) -> PowerGrid {
    read_powergrid(&grid_text(name)).unwrap()
}
