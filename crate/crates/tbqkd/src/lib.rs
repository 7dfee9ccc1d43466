//! Experiment runner for the time-bin decoy-state BB84 simulator.
//!
//! [`config`] reads the TOML experiment description, [`experiment`] runs the
//! simulated measurements (single sessions, loss sweeps, pump-delay scans,
//! stability runs), [`report`] writes and reads the resulting tables and
//! [`tags`] handles raw time-tag dumps. The physics and analysis live in
//! `tbqkd-core`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod tags;

pub use config::{ExperimentConfig, Format};
pub use error::{Error, Result};
pub use report::{emit, load, SweepResult};
