//! Exact reduced spin dynamics under the Mølmer–Sørensen evolution operator
//! U(τ) = exp[Σ_i φ̂_i σ_x^(i) + i Σ_{i<j} χ_{i,j} σ_x^(i) σ_x^(j)].
//!
//! In the σ_x product eigenbasis {|s⟩, s_i = ±1} the operator is a phase
//! Θ_s = Σ_{i<j} χ_{i,j} s_i s_j times a displacement A_{s,m} = Σ_i s_i α_{i,m}
//! of each mode. Tracing a thermal state of each mode over the displaced
//! pair gives the Gaussian overlap and cross phase applied below.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::couplings::{alpha_matrix, chi_matrix, ChiFormula};
use super::drive::{Drive, MotionalState};
use super::state::SpinDensity;
use crate::crystal::IonCrystal;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SpinMotionEvolution {
    /// α_{i,m}(τ).
    pub alpha: DMatrix<Complex64>,
    /// χ_{i,j}(τ), symmetric, zero diagonal.
    pub chi: DMatrix<f64>,
    pub rho_spin: SpinDensity,
    /// P_n, n = 0…N.
    pub populations: Vec<f64>,
}

/// Evolves `initial` for `drive.duration` using the standard χ.
pub fn evolve(
    crystal: &IonCrystal,
    drive: &Drive,
    motion: &MotionalState,
    initial: &SpinDensity,
) -> Result<SpinMotionEvolution> {
    evolve_with(crystal, drive, motion, initial, ChiFormula::Standard)
}

pub fn evolve_with(
    crystal: &IonCrystal,
    drive: &Drive,
    motion: &MotionalState,
    initial: &SpinDensity,
    formula: ChiFormula,
) -> Result<SpinMotionEvolution> {
    drive.check_against(crystal)?;
    motion.check_against(crystal)?;
    if initial.n_ions() != crystal.n_ions() {
        return Err(Error::DimensionMismatch {
            what: "initial spin state",
            expected: crystal.n_ions(),
            found: initial.n_ions(),
        });
    }
    let alpha = alpha_matrix(crystal, drive, drive.duration)?;
    let chi = chi_matrix(crystal, drive, drive.duration, formula)?;
    let rho_spin = apply_closed_form(initial, &alpha, &chi, &motion.nbar)?;
    let populations = rho_spin.populations();
    Ok(SpinMotionEvolution {
        alpha,
        chi,
        rho_spin,
        populations,
    })
}

/// Spin eigenvalue s_i ∈ {+1, −1} of ion `i` for σ_x-basis index `k`.
fn spin_sign(k: usize, i: usize, n: usize) -> f64 {
    if k >> (n - 1 - i) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Applies the traced-out evolution channel for given α and χ.
pub fn apply_closed_form(
    initial: &SpinDensity,
    alpha: &DMatrix<Complex64>,
    chi: &DMatrix<f64>,
    nbar: &[f64],
) -> Result<SpinDensity> {
    let n = initial.n_ions();
    let n_modes = alpha.ncols();
    if alpha.nrows() != n || chi.nrows() != n || chi.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "alpha/chi rows",
            expected: n,
            found: alpha.nrows(),
        });
    }
    if nbar.len() != n_modes {
        return Err(Error::DimensionMismatch {
            what: "thermal occupations",
            expected: n_modes,
            found: nbar.len(),
        });
    }
    let dim = initial.dim();

    let mut theta = vec![0.0; dim];
    let mut disp = DMatrix::<Complex64>::zeros(dim, n_modes);
    for k in 0..dim {
        let s: Vec<f64> = (0..n).map(|i| spin_sign(k, i, n)).collect();
        for i in 0..n {
            for j in i + 1..n {
                theta[k] += chi[(i, j)] * s[i] * s[j];
            }
            for m in 0..n_modes {
                disp[(k, m)] += alpha[(i, m)] * s[i];
            }
        }
    }

    let x = initial.hadamard_all();
    let mut rho = x.into_matrix();
    for a in 0..dim {
        for b in 0..dim {
            let mut log_factor = Complex64::new(0.0, theta[a] - theta[b]);
            for m in 0..n_modes {
                let (da, db) = (disp[(a, m)], disp[(b, m)]);
                let gaussian = -0.5 * (da - db).norm_sqr() * (2.0 * nbar[m] + 1.0);
                let cross = (da * db.conj()).im;
                log_factor += Complex64::new(gaussian, cross);
            }
            rho[(a, b)] *= log_factor.exp();
        }
    }
    Ok(SpinDensity::from_matrix(n, rho)?.hadamard_all())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::angular;
    use crate::crystal::{build_crystal, TrapConfig};
    use crate::spinmotion::state::bell_state;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn two_ion() -> IonCrystal {
        build_crystal(
            &TrapConfig::from_hz(2, 0.616e6, 3.5838e6)
                .unwrap()
                .with_mass_amu(171.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_rabi_is_identity() {
        let c = two_ion();
        let d = Drive::uniform(angular(3.55e6), 0.0, 2, 3e-5).unwrap();
        let rho0 = SpinDensity::all_down(2).unwrap();
        let out = evolve(&c, &d, &MotionalState::ground(2), &rho0).unwrap();
        assert!((out.rho_spin.matrix() - rho0.matrix()).camax() < 1e-15);
        assert!((out.populations[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_alpha_and_chi_is_identity_channel() {
        let rho0 = SpinDensity::from_pure(
            3,
            &(0..8)
                .map(|k| Complex64::new(k as f64 * 0.1 + 0.05, 0.3 - 0.07 * k as f64))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let out = apply_closed_form(
            &rho0,
            &DMatrix::zeros(3, 3),
            &DMatrix::zeros(3, 3),
            &[0.0, 1.0, 2.0],
        )
        .unwrap();
        assert!((out.matrix() - rho0.matrix()).camax() < 1e-15);
    }

    #[test]
    fn pure_quarter_pi_coupling_makes_bell_state() {
        let mut chi = DMatrix::zeros(2, 2);
        chi[(0, 1)] = FRAC_PI_4;
        chi[(1, 0)] = FRAC_PI_4;
        let out = apply_closed_form(
            &SpinDensity::all_down(2).unwrap(),
            &DMatrix::zeros(2, 1),
            &chi,
            &[0.0],
        )
        .unwrap();
        assert!((out.fidelity_with(&bell_state()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bisecting_gate_reaches_bell_state() {
        let c = two_ion();
        let w = &c.mode_frequencies;
        let mu = 0.5 * (w[0] + w[1]);
        let delta = w[0] - mu;
        let tau_g = 2.0 * PI / delta;
        let eta_rms = (c.lamb_dicke.iter().map(|x| x * x).sum::<f64>() / 4.0).sqrt();
        // Calibrate exactly: χ ∝ Ω².
        let probe = Drive::uniform(mu, 1.0, 2, tau_g).unwrap();
        let unit = crate::spinmotion::chi_coupling(&c, &probe, 0, 1, tau_g).unwrap();
        let rabi = (FRAC_PI_4 / unit).sqrt();
        assert!((eta_rms * rabi / delta - 0.3536).abs() < 0.007);
        let d = Drive::uniform(mu, rabi, 2, tau_g).unwrap();
        let out = evolve(
            &c,
            &d,
            &MotionalState::ground(2),
            &SpinDensity::all_down(2).unwrap(),
        )
        .unwrap();
        let p = &out.populations;
        assert!(
            (p[0] - 0.5).abs() < 1e-3 && (p[2] - 0.5).abs() < 1e-3 && p[1] < 1e-3,
            "{p:?}"
        );
        let f = out.rho_spin.fidelity_with(&bell_state()).unwrap();
        assert!(f > 0.999, "fidelity {f}");
    }

    #[test]
    fn thermal_motion_keeps_state_physical() {
        let c = two_ion();
        let w = &c.mode_frequencies;
        let d = Drive::uniform(w[0] + angular(15e3), 3e5, 2, 2.1e-5).unwrap();
        let motion = MotionalState::thermal(vec![1.0, 2.0]).unwrap();
        let out = evolve(&c, &d, &motion, &SpinDensity::all_down(2).unwrap()).unwrap();
        out.rho_spin.check_physical(1e-10).unwrap();
        assert!((out.populations.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let c = two_ion();
        let d = Drive::uniform(angular(3.55e6), 1e5, 2, 1e-5).unwrap();
        let rho3 = SpinDensity::all_down(3).unwrap();
        assert!(matches!(
            evolve(&c, &d, &MotionalState::ground(2), &rho3),
            Err(Error::DimensionMismatch { .. })
        ));
        let rho2 = SpinDensity::all_down(2).unwrap();
        assert!(evolve(&c, &d, &MotionalState::ground(3), &rho2).is_err());
    }
}

#[cfg(test)]
mod properties {
    use proptest::prelude::*;

    use super::*;
    use crate::spinmotion::carrier_rotation;
    use crate::spinmotion::strategies::{crystal_and_drive, off_resonant_mu};

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn evolved_spin_state_is_physical(
            (c, rabi, tau) in crystal_and_drive(),
            offset_hz in -6.0e5..2.0e5f64,
            nbar in 0.0..2.0f64,
        ) {
            let n = c.n_ions();
            let drive = Drive::new(off_resonant_mu(&c, offset_hz), rabi, tau).unwrap();
            let motion = MotionalState::thermal(vec![nbar; c.n_modes()]).unwrap();
            let run = evolve(&c, &drive, &motion, &SpinDensity::all_down(n).unwrap()).unwrap();
            let rho = &run.rho_spin;
            prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
            prop_assert!(rho.hermiticity_error() < 1e-12);
            prop_assert!(rho.min_eigenvalue() > -1e-10);
            prop_assert!((run.populations.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let rotated = carrier_rotation(rho, 1.3, 0.4);
            prop_assert!((rotated.trace() - 1.0).abs() < 1e-12);
            prop_assert!(rotated.parity().abs() <= 1.0 + 1e-12);
        }
    }
}
