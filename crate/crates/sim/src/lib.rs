//! Command-line harness and live cockpit bridge around `rapu-core`.

pub mod bridge;
pub mod cli;
pub mod protocol;
