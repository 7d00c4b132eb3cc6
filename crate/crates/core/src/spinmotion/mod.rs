//! Closed-form Mølmer–Sørensen spin-motion dynamics.

mod couplings;
mod drive;
mod evolve;
mod state;

pub(crate) use couplings::ising_from_parts;
pub use couplings::{
    alpha_matrix, chi_coupling, chi_coupling_with, chi_matrix, chi_mode_kernel, displacement_alpha,
    ising_matrix, ChiFormula, CouplingMatrix,
};
pub(crate) use drive::check_off_resonant;
pub use drive::{Drive, MotionalState};
pub use evolve::{apply_closed_form, evolve, evolve_with, SpinMotionEvolution};
pub use state::{
    bell_state, carrier_rotation, fidelity_bound, ghz_state, parity_scan, SpinDensity, MAX_SPINS,
};
