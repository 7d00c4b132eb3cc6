//! Independent brute-force validators for the closed-form dynamics.

mod fock;
mod magnus;
pub mod quadrature;

pub use fock::{
    integrate_full, integrate_hamiltonian, max_population_difference, thermal_weights,
    truncation_sweep, FockRun, FockSpec, TruncationReport, DEFAULT_AMPLITUDE_CAP,
    DEFAULT_TRUNCATION_LADDER, NORM_TOLERANCE, STEPS_PER_BEAT,
};
pub use magnus::{magnus_chi, magnus_mode_kernel, MAGNUS_REL_TOL};
