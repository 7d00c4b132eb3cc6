//! Physical constants (CODATA 2018) and default trap/laser parameters.

use std::f64::consts::{PI, SQRT_2};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054571817e-34;
/// Atomic mass unit, kg.
pub const AMU: f64 = 1.66053907e-27;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.8541878128e-12;

/// Mass of a ¹⁷¹Yb⁺ ion in atomic mass units.
pub const YB171_MASS_AMU: f64 = 170.936;
/// Raman beam wavelength, m.
pub const DEFAULT_RAMAN_WAVELENGTH: f64 = 369.75e-9;
/// δk = g·2π/λ for counter-propagating-at-90° Raman beams.
pub const DEFAULT_WAVEVECTOR_FACTOR: f64 = SQRT_2;
/// ¹⁷¹Yb⁺ hyperfine clock splitting ω₀/2π, Hz. Enters only through the
/// rotating-wave approximation; kept for reporting.
pub const QUBIT_SPLITTING_HZ: f64 = 12.643e9;

/// Detunings closer than this to a mode (rad/s) count as resonant.
pub const RESONANCE_GUARD: f64 = 2.0 * PI * 1.0;

/// Hz → rad/s.
pub fn angular(hz: f64) -> f64 {
    2.0 * PI * hz
}

/// rad/s → Hz.
pub fn cyclic(rad_per_s: f64) -> f64 {
    rad_per_s / (2.0 * PI)
}
