//! Multimode Mølmer–Sørensen spin-spin dynamics in linear trapped-ion crystals.
//!
//! The crate is organized bottom-up:
//!
//! * [`crystal`]: equilibrium positions, transverse normal modes and
//!   Lamb-Dicke parameters of an N-ion chain.
//! * [`spinmotion`]: closed-form spin-dependent displacements, pairwise
//!   couplings, the effective Ising matrix, and exact reduced spin dynamics
//!   including thermal motion, carrier rotations and parity analysis.
//! * [`oracle`]: brute-force validators (truncated-Fock integration of the
//!   time-dependent Hamiltonian and a numerical Magnus double integral).
//! * [`experiments`]: gate calibration, time/phase/detuning scans and Ising
//!   coupling extraction from population time series.
//! * [`cli`]: configuration parsing, experiment dispatch and deterministic
//!   CSV/JSON output for the `ionsim` binary.
//!
//! Frequencies are angular (rad/s) everywhere except at the configuration
//! boundary, where the user supplies cyclic frequencies in Hz.

pub mod cli;
pub mod constants;
pub mod crystal;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod spinmotion;

pub use crystal::{build_crystal, IonCrystal, TrapConfig};
pub use error::{Error, Result};
pub use spinmotion::{CouplingMatrix, Drive, MotionalState, SpinDensity, SpinMotionEvolution};
