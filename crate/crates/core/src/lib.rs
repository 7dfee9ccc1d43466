//! Monte Carlo model of decoy-state BB84 with picosecond time-bin qubits.
//!
//! The crate is `no_std` (it needs `alloc`) and holds the pure parts of the
//! simulator:
//!
//! - [`qubit`]: time-bin states, the three mutually unbiased bases and the
//!   half-wave-plate preparation map.
//! - [`optics`]: the cross-phase-modulation polarization switch that reads out
//!   the early bin, including the pump/signal walk-off overlap.
//! - [`source`]: weak coherent pulses with signal/decoy/vacuum classes, the
//!   loss budget and the slow pump drift process.
//! - [`detection`]: Bob's receiver, time tags, windowed counting and the
//!   per-block Monte Carlo driver.
//! - [`analysis`]: probability-of-detection matrices, fidelities, QBER,
//!   decoy-state bounds and the asymptotic secret key rate.
//!
//! Randomness always comes from a caller-supplied generator; [`stream`]
//! derives independent, counter-addressed ChaCha streams from one seed so
//! block-parallel runs are reproducible regardless of scheduling.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod detection;
mod error;
pub mod optics;
pub mod qubit;
pub mod source;
pub mod stream;

pub use error::{Error, Result};
