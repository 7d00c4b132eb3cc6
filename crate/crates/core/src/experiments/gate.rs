use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::Serialize;

use super::scan::{Column, ScanResult};
use crate::crystal::IonCrystal;
use crate::error::{Error, Result};
use crate::spinmotion::{
    carrier_rotation, check_off_resonant, chi_matrix, evolve, fidelity_bound, ghz_state,
    parity_scan, ChiFormula, Drive, MotionalState, SpinDensity,
};

/// How the beatnote detuning μ is placed relative to the modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DetuningRule {
    /// Midway between two modes. The first is the gate reference.
    Bisect { reference: usize, other: usize },
    /// μ = ω_mode + offset, offset in rad/s (positive is blue).
    Offset { mode: usize, offset: f64 },
}

impl DetuningRule {
    /// (μ, reference mode index).
    pub fn resolve(&self, crystal: &IonCrystal) -> Result<(f64, usize)> {
        let w = &crystal.mode_frequencies;
        let check = |m: usize| {
            if m < w.len() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "mode {m} out of range (have {})",
                    w.len()
                )))
            }
        };
        let (mu, reference) = match *self {
            DetuningRule::Bisect { reference, other } => {
                check(reference)?;
                check(other)?;
                if reference == other {
                    return Err(Error::InvalidArgument(
                        "bisection needs two distinct modes".into(),
                    ));
                }
                (0.5 * (w[reference] + w[other]), reference)
            }
            DetuningRule::Offset { mode, offset } => {
                check(mode)?;
                if !offset.is_finite() {
                    return Err(Error::InvalidArgument(format!("invalid offset {offset}")));
                }
                (w[mode] + offset, mode)
            }
        };
        if !(mu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "detuning resolves to {mu} rad/s"
            )));
        }
        Ok((mu, reference))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateSpec {
    pub detuning: DetuningRule,
    /// χ* for every pair.
    pub target_chi: f64,
    /// Overrides τ_g = 2π/|ω_ref − μ| when set.
    pub duration: Option<f64>,
}

impl GateSpec {
    pub fn new(detuning: DetuningRule) -> Self {
        GateSpec {
            detuning,
            target_chi: FRAC_PI_4,
            duration: None,
        }
    }

    pub fn with_target(mut self, chi: f64) -> Self {
        self.target_chi = chi;
        self
    }

    pub fn with_duration(mut self, tau: f64) -> Self {
        self.duration = Some(tau);
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GateCalibration {
    pub drive: Drive,
    pub reference_mode: usize,
    /// μ − ω_ref, rad/s.
    pub detuning: f64,
    pub gate_time: f64,
    /// Uniform Ω, rad/s.
    pub rabi: f64,
    /// |η_{1,ref}| Ω / |ω_ref − μ|.
    pub eta_rabi_ratio: f64,
    /// Mean χ over pairs at the calibrated Ω.
    pub chi_mean: f64,
    /// max − min of χ over pairs.
    pub chi_spread: f64,
    /// |mean χ| − χ*.
    pub residual: f64,
    #[serde(skip)]
    pub chi: DMatrix<f64>,
}

/// Uniform Ω giving mean pair coupling |χ(τ_g)| = χ*.
///
/// χ is exactly quadratic in Ω, so a single unit-Ω evaluation fixes Ω².
/// A blue detuning yields negative χ; the sign is kept in `chi_mean`.
pub fn calibrate_gate(crystal: &IonCrystal, spec: &GateSpec) -> Result<GateCalibration> {
    let n = crystal.n_ions();
    if n < 2 {
        return Err(Error::CalibrationFailure(
            "a gate needs at least two ions".into(),
        ));
    }
    if !(spec.target_chi.is_finite() && spec.target_chi >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target coupling must be non-negative, got {}",
            spec.target_chi
        )));
    }
    let (mu, reference) = spec.detuning.resolve(crystal)?;
    check_off_resonant(mu, &crystal.mode_frequencies)?;
    let detuning = mu - crystal.mode_frequencies[reference];
    let gate_time = match spec.duration {
        Some(t) if t.is_finite() && t > 0.0 => t,
        Some(t) => return Err(Error::InvalidArgument(format!("invalid gate time {t}"))),
        None => 2.0 * PI / detuning.abs(),
    };

    let unit = chi_matrix(
        crystal,
        &Drive::uniform(mu, 1.0, n, gate_time)?,
        gate_time,
        ChiFormula::Standard,
    )?;
    let pairs: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| unit[(i, j)])
        .collect();
    let mean_unit = pairs.iter().sum::<f64>() / pairs.len() as f64;
    if !(mean_unit.is_finite() && mean_unit != 0.0) {
        return Err(Error::CalibrationFailure(format!(
            "mean pair coupling per unit Ω² is {mean_unit:e}; no Ω reaches the target"
        )));
    }
    if pairs.iter().any(|&c| c * mean_unit <= 0.0) {
        return Err(Error::CalibrationFailure(format!(
            "pair couplings change sign at this detuning: {pairs:?}"
        )));
    }

    let rabi = (spec.target_chi / mean_unit.abs()).sqrt();
    let chi = unit * (rabi * rabi);
    let (lo, hi) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
            (lo.min(c), hi.max(c))
        });
    let chi_mean = mean_unit * rabi * rabi;
    let eta = crystal.lamb_dicke[(0, reference)].abs();
    Ok(GateCalibration {
        drive: Drive::uniform(mu, rabi, n, gate_time)?,
        reference_mode: reference,
        detuning,
        gate_time,
        rabi,
        eta_rabi_ratio: eta * rabi / detuning.abs(),
        chi_mean,
        chi_spread: (hi - lo) * rabi * rabi,
        residual: chi_mean.abs() - spec.target_chi,
        chi,
    })
}

#[derive(Clone, Debug)]
pub struct GhzPreparation {
    /// State right after the gate.
    pub gate_state: SpinDensity,
    /// State after the global π/2 rotation.
    pub state: SpinDensity,
    pub phase: f64,
    /// Fidelity with the closest (|↑…↑⟩ + e^{iθ}|↓…↓⟩)/√2.
    pub overlap: f64,
    /// θ of that closest state.
    pub relative_phase: f64,
    /// Overlap with θ = 0 exactly.
    pub overlap_fixed_phase: f64,
}

/// max over θ of ⟨GHZ_θ|ρ|GHZ_θ⟩ = ½(ρ_{0,0} + ρ_{N,N}) + |ρ_{0,N}|, with the
/// maximizing θ.
pub fn ghz_fidelity(rho: &SpinDensity) -> (f64, f64) {
    let m = rho.matrix();
    let last = rho.dim() - 1;
    let coherence = m[(last, 0)];
    (
        0.5 * (m[(0, 0)].re + m[(last, last)].re) + coherence.norm(),
        coherence.arg(),
    )
}

/// Runs the gate from all spins down, then a π/2 rotation whose phase
/// maximizes the GHZ fidelity.
pub fn ghz_prepare(
    crystal: &IonCrystal,
    drive: &Drive,
    motion: &MotionalState,
) -> Result<GhzPreparation> {
    let n = crystal.n_ions();
    let gate_state = evolve(crystal, drive, motion, &SpinDensity::all_down(n)?)?.rho_spin;
    let overlap_at = |phi: f64| ghz_fidelity(&carrier_rotation(&gate_state, FRAC_PI_2, phi)).0;

    const COARSE: usize = 96;
    let step = 2.0 * PI / COARSE as f64;
    let (mut best_phi, mut best) = (0.0, f64::NEG_INFINITY);
    for k in 0..COARSE {
        let phi = k as f64 * step;
        let v = overlap_at(phi);
        if v > best {
            (best_phi, best) = (phi, v);
        }
    }
    let phase =
        golden_max(&overlap_at, best_phi - step, best_phi + step, 1e-12).rem_euclid(2.0 * PI);
    let state = carrier_rotation(&gate_state, FRAC_PI_2, phase);
    let (overlap, relative_phase) = ghz_fidelity(&state);
    let overlap_fixed_phase = state.fidelity_with(&ghz_state(n))?;
    Ok(GhzPreparation {
        gate_state,
        state,
        phase,
        overlap,
        relative_phase,
        overlap_fixed_phase,
    })
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            (d, fd) = (c, fc);
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            (c, fc) = (d, fd);
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Clone, Debug)]
pub struct ParityResult {
    pub scan: ScanResult,
    /// Fitted amplitude of the parity oscillation at N φ.
    pub contrast: f64,
    /// Fitted constant offset.
    pub offset: f64,
    /// Fitted phase θ in parity ≈ offset + contrast·sin(Nφ + θ).
    pub phase: f64,
    pub p0_plus_pn: f64,
    pub fidelity_bound: f64,
}

/// Parity after a π/2 analysis pulse at each φ, its sinusoidal fit at
/// frequency N, and the fidelity lower bound.
pub fn parity_experiment(rho: &SpinDensity, phases: &[f64]) -> Result<ParityResult> {
    let n = rho.n_ions();
    if phases.len() < 3 {
        return Err(Error::InvalidArgument(
            "a parity fit needs at least three phases".into(),
        ));
    }
    let parity = parity_scan(rho, phases);
    let scan = ScanResult::new(
        Column::new("phi", "rad", phases.to_vec()),
        vec![Column::new("parity", "1", parity.clone())],
    )?;

    let nf = n as f64;
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (&phi, &p) in phases.iter().zip(&parity) {
        let basis = Vector3::new(1.0, (nf * phi).cos(), (nf * phi).sin());
        normal += basis * basis.transpose();
        rhs += basis * p;
    }
    let eig = normal.symmetric_eigenvalues();
    if eig.min() <= 1e-10 * eig.max() {
        return Err(Error::FitFailure(
            "parity phases do not resolve frequency N".into(),
        ));
    }
    let coef = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::FitFailure("singular parity fit".into()))?;
    let contrast = coef[1].hypot(coef[2]);
    let pops = rho.populations();
    let p0_plus_pn = pops[0] + pops[n];
    let fidelity_bound = fidelity_bound(p0_plus_pn.clamp(0.0, 1.0), contrast.min(1.0))?;
    Ok(ParityResult {
        scan,
        contrast,
        offset: coef[0],
        phase: coef[1].atan2(coef[2]),
        p0_plus_pn,
        fidelity_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::angular;
    use crate::crystal::{build_crystal, TrapConfig};
    use crate::spinmotion::{bell_state, chi_coupling};

    fn crystal(n: usize) -> IonCrystal {
        let trap = if n == 2 {
            TrapConfig::from_hz(2, 0.616e6, 3.5838e6)
        } else {
            TrapConfig::from_hz(3, 1.484e6, 3.952e6)
        };
        build_crystal(&trap.unwrap().with_mass_amu(171.0)).unwrap()
    }

    fn phases(k: usize) -> Vec<f64> {
        (0..k).map(|i| 2.0 * PI * i as f64 / k as f64).collect()
    }

    #[test]
    fn bisecting_gate_calibration() {
        let c = crystal(2);
        let cal = calibrate_gate(
            &c,
            &GateSpec::new(DetuningRule::Bisect {
                reference: 0,
                other: 1,
            }),
        )
        .unwrap();
        assert!(
            (cal.eta_rabi_ratio - 0.3536).abs() < 0.007,
            "{}",
            cal.eta_rabi_ratio
        );
        assert!(
            (cal.gate_time - 37.5e-6).abs() < 0.2e-6,
            "{}",
            cal.gate_time
        );
        let chi = chi_coupling(&c, &cal.drive, 0, 1, cal.gate_time).unwrap();
        assert!((chi.abs() - FRAC_PI_4).abs() < 1e-6);
        assert!(cal.residual.abs() < 1e-12);
        assert_eq!(cal.chi_spread, 0.0);
    }

    #[test]
    fn zero_target_gives_zero_rabi() {
        let c = crystal(2);
        let spec = GateSpec::new(DetuningRule::Bisect {
            reference: 0,
            other: 1,
        })
        .with_target(0.0);
        assert_eq!(calibrate_gate(&c, &spec).unwrap().rabi, 0.0);
    }

    #[test]
    fn three_ion_offset_gate() {
        let c = crystal(3);
        let spec = GateSpec::new(DetuningRule::Offset {
            mode: 0,
            offset: angular(9.4e3),
        });
        let cal = calibrate_gate(&c, &spec).unwrap();
        assert!(cal.detuning > 0.0 && cal.chi_mean < 0.0);
        assert!(
            (0.49..=0.54).contains(&cal.eta_rabi_ratio),
            "{}",
            cal.eta_rabi_ratio
        );
        assert!(cal.chi_spread / cal.chi_mean.abs() < 0.05);
    }

    #[test]
    fn invalid_rules_rejected() {
        let c = crystal(2);
        let bad = [
            GateSpec::new(DetuningRule::Bisect {
                reference: 0,
                other: 0,
            }),
            GateSpec::new(DetuningRule::Bisect {
                reference: 0,
                other: 5,
            }),
            GateSpec::new(DetuningRule::Offset {
                mode: 0,
                offset: 0.0,
            }),
            GateSpec::new(DetuningRule::Offset {
                mode: 0,
                offset: f64::NAN,
            }),
            GateSpec::new(DetuningRule::Offset {
                mode: 0,
                offset: 1e4,
            })
            .with_target(-1.0),
            GateSpec::new(DetuningRule::Offset {
                mode: 0,
                offset: 1e4,
            })
            .with_duration(0.0),
        ];
        for spec in bad {
            assert!(calibrate_gate(&c, &spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn parity_fit_on_bell_state() {
        let rho = SpinDensity::from_pure(2, &bell_state()).unwrap();
        let r = parity_experiment(&rho, &phases(16)).unwrap();
        assert!((r.contrast - 1.0).abs() < 1e-12);
        assert!(r.offset.abs() < 1e-12);
        assert!(r.phase.abs() < 1e-12);
        assert!((r.fidelity_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parity_fit_needs_resolving_phases() {
        let rho = SpinDensity::all_down(2).unwrap();
        assert!(parity_experiment(&rho, &[0.0, 1.0]).is_err());
        assert!(parity_experiment(&rho, &[0.0, PI, 2.0 * PI]).is_err());
    }

    #[test]
    fn ghz_without_drive_is_product_state_overlap() {
        let c = crystal(3);
        let d = Drive::uniform(c.mode_frequencies[0] + angular(9.4e3), 0.0, 3, 1e-4).unwrap();
        let g = ghz_prepare(&c, &d, &MotionalState::ground(3)).unwrap();
        assert!((g.overlap - 0.25).abs() < 1e-12, "{}", g.overlap);
    }

    #[test]
    fn ideal_three_ion_coupling_rotates_to_ghz() {
        use crate::spinmotion::apply_closed_form;
        let mut chi = DMatrix::from_element(3, 3, FRAC_PI_4);
        chi.fill_diagonal(0.0);
        let rho = apply_closed_form(
            &SpinDensity::all_down(3).unwrap(),
            &DMatrix::zeros(3, 1),
            &chi,
            &[0.0],
        )
        .unwrap();
        let best = (0..720)
            .map(|k| ghz_fidelity(&carrier_rotation(&rho, FRAC_PI_2, k as f64 * PI / 360.0)).0)
            .fold(0.0, f64::max);
        assert!((best - 1.0).abs() < 1e-12, "{best}");
    }

    #[test]
    fn ghz_fidelity_of_known_states() {
        let ghz = SpinDensity::from_pure(3, &ghz_state(3)).unwrap();
        let (f, theta) = ghz_fidelity(&ghz);
        assert!((f - 1.0).abs() < 1e-14 && theta.abs() < 1e-14);
        let (f, _) = ghz_fidelity(&SpinDensity::maximally_mixed(3).unwrap());
        assert!((f - 0.125).abs() < 1e-14);
    }
}
