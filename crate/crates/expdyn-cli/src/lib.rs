//! Library half of the `expdyn` command-line tool: argument parsing for
//! complex numbers, flat-file configuration, deterministic grid scans, and
//! image rendering. The binary in `main.rs` is a thin dispatcher over these.

pub mod config;
pub mod cparse;
pub mod render;
pub mod scan;
