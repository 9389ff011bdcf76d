//! Configuration-driven runs behind the `nonlocal-hjb` binary.

pub mod config;
pub mod run;

pub use config::{Mode, RunConfig};
pub use run::{execute, run, Invariant, RunReport, Status};
