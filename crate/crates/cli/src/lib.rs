//! Library half of the `pser` command-line harness.

pub mod bench;
pub mod config;
pub mod error;
pub mod sweep;
pub mod theory_cmd;

pub use error::{HarnessError, HarnessResult};
