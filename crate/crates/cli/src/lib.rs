//! Experiment harness behind the `gradflow` binary: config parsing,
//! smooth test energies, experiment orchestration and SVG plotting.

pub mod config;
pub mod experiments;
pub mod plot;
pub mod smooth;
