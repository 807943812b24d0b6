//! One-dimensional two-state matterwave interferometer simulator.
//!
//! The crate propagates a spinor wavefunction (internal states `|a>` and `|b>`
//! over a shared spatial lattice) through Raman-pulse interferometer sequences
//! in a uniform gravitational field, and quantifies how much information the
//! output state carries about the acceleration `g`:
//!
//! * [`grid`] and [`units`] hold the lattice and the physical constants,
//! * [`wavepacket`] builds spinors and extracts moments and measurement
//!   distributions,
//! * [`propagator`] evolves spinors (split-step and exact factorized gravity),
//! * [`pulses`] applies instantaneous internal-state unitaries,
//! * [`fisher`] estimates quantum and classical Fisher information,
//! * [`sequences`] assembles interferometer presets and parameter scans.
//!
//! Natural units (`hbar = m = k0 = 1`) are the default throughout.

pub mod error;
pub mod fisher;
pub mod grid;
pub mod propagator;
pub mod pulses;
pub mod sequences;
pub mod units;
pub mod wavepacket;

pub use error::{Error, Result};
pub use fisher::{Basis, Distribution, FisherEstimate};
pub use grid::{make_grid, Grid};
pub use propagator::PotentialSpec;
pub use pulses::PulseSpec;
pub use sequences::{Event, FisherTrace, Preset, ScanConfig, SequenceSpec};
pub use units::PhysicalParams;
pub use wavepacket::{Moments, Spinor};

pub use num_complex::Complex64;
