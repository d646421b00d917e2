//! Experiment harness behind the `gpkit` binary: configuration, CSV I/O,
//! synthetic campaign generators, experiment runners, and table emission.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod synth;
pub mod tables;
