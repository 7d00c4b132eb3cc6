//! Closed-form displacements α_{i,m}(τ), pair couplings χ_{i,j}(τ) and the
//! secular Ising matrix J_{i,j}.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::drive::{check_off_resonant, Drive};
use crate::crystal::IonCrystal;
use crate::error::{Error, Result};

/// Which form of the oscillating `sin 2μτ` bracket term to use in χ.
///
/// `Standard` evaluates `μ sin(2μτ)/(2ω_m)`. `ExactMagnus` uses
/// `ω_m sin(2μτ)/(2μ)`, which is what the second-order Magnus integral of the
/// interaction Hamiltonian yields. The two differ by
/// `Ω_iΩ_j Σ_m η_{i,m}η_{j,m} sin(2μτ)/(2μω_m)`, a bounded term of relative
/// size ~1/(ω_m τ).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum ChiFormula {
    #[default]
    Standard,
    ExactMagnus,
}

/// Spin-dependent displacement of mode `m` by ion `i` after time `tau`.
pub fn displacement_alpha(
    crystal: &IonCrystal,
    drive: &Drive,
    i: usize,
    m: usize,
    tau: f64,
) -> Result<Complex64> {
    drive.check_against(crystal)?;
    check_index("ion", i, crystal.n_ions())?;
    check_index("mode", m, crystal.n_modes())?;
    Ok(alpha_unchecked(
        crystal.lamb_dicke[(i, m)] * drive.rabi[i],
        drive.mu,
        crystal.mode_frequencies[m],
        tau,
    ))
}

fn alpha_unchecked(eta_rabi: f64, mu: f64, w: f64, tau: f64) -> Complex64 {
    let i = Complex64::i();
    let (s, c) = (mu * tau).sin_cos();
    let bracket = mu - Complex64::from_polar(1.0, w * tau) * (mu * c - i * w * s);
    -i * eta_rabi / (mu * mu - w * w) * bracket
}

/// α_{i,m}(τ) for all ions and modes.
pub fn alpha_matrix(crystal: &IonCrystal, drive: &Drive, tau: f64) -> Result<DMatrix<Complex64>> {
    drive.check_against(crystal)?;
    Ok(DMatrix::from_fn(
        crystal.n_ions(),
        crystal.n_modes(),
        |i, m| {
            alpha_unchecked(
                crystal.lamb_dicke[(i, m)] * drive.rabi[i],
                drive.mu,
                crystal.mode_frequencies[m],
                tau,
            )
        },
    ))
}

/// Per-mode factor of χ: the bracketed sum divided by (μ² − ω²).
pub fn chi_mode_kernel(mu: f64, w: f64, tau: f64, formula: ChiFormula) -> f64 {
    let third = match formula {
        ChiFormula::Standard => mu * (2.0 * mu * tau).sin() / (2.0 * w),
        ChiFormula::ExactMagnus => w * (2.0 * mu * tau).sin() / (2.0 * mu),
    };
    let bracket = mu * ((mu - w) * tau).sin() / (mu - w) - mu * ((mu + w) * tau).sin() / (mu + w)
        + third
        - w * tau;
    bracket / (mu * mu - w * w)
}

/// Coupling χ_{i,j}(τ) between two distinct ions, standard form.
pub fn chi_coupling(
    crystal: &IonCrystal,
    drive: &Drive,
    i: usize,
    j: usize,
    tau: f64,
) -> Result<f64> {
    chi_coupling_with(crystal, drive, i, j, tau, ChiFormula::Standard)
}

pub fn chi_coupling_with(
    crystal: &IonCrystal,
    drive: &Drive,
    i: usize,
    j: usize,
    tau: f64,
    formula: ChiFormula,
) -> Result<f64> {
    drive.check_against(crystal)?;
    check_index("ion", i, crystal.n_ions())?;
    check_index("ion", j, crystal.n_ions())?;
    if i == j {
        return Err(Error::InvalidArgument(
            "chi is defined for distinct ions only".into(),
        ));
    }
    Ok(chi_pair(crystal, drive, i, j, tau, formula))
}

fn chi_pair(
    crystal: &IonCrystal,
    drive: &Drive,
    i: usize,
    j: usize,
    tau: f64,
    formula: ChiFormula,
) -> f64 {
    let eta = &crystal.lamb_dicke;
    let sum: f64 = crystal
        .mode_frequencies
        .iter()
        .enumerate()
        .map(|(m, &w)| eta[(i, m)] * eta[(j, m)] * chi_mode_kernel(drive.mu, w, tau, formula))
        .sum();
    drive.rabi[i] * drive.rabi[j] * sum
}

/// Symmetric χ matrix with zero diagonal.
pub fn chi_matrix(
    crystal: &IonCrystal,
    drive: &Drive,
    tau: f64,
    formula: ChiFormula,
) -> Result<DMatrix<f64>> {
    drive.check_against(crystal)?;
    let n = crystal.n_ions();
    let mut chi = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let c = chi_pair(crystal, drive, i, j, tau, formula);
            chi[(i, j)] = c;
            chi[(j, i)] = c;
        }
    }
    Ok(chi)
}

/// Effective Ising couplings J_{i,j}, rad/s. Symmetric, zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingMatrix {
    #[serde(serialize_with = "serialize_square")]
    pub j: DMatrix<f64>,
}

fn serialize_square<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

impl CouplingMatrix {
    pub fn n_ions(&self) -> usize {
        self.j.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.j[(i, j)]
    }

    /// Unordered pairs (i, j) with i < j, in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_ions();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect()
    }
}

/// J_{i,j} = −Ω_iΩ_j Σ_m η_{i,m}η_{j,m} ω_m/(μ² − ω_m²).
pub fn ising_matrix(crystal: &IonCrystal, drive: &Drive) -> Result<CouplingMatrix> {
    drive.check_against(crystal)?;
    ising_from_parts(crystal, drive.mu, &drive.rabi)
}

pub(crate) fn ising_from_parts(
    crystal: &IonCrystal,
    mu: f64,
    rabi: &[f64],
) -> Result<CouplingMatrix> {
    check_off_resonant(mu, &crystal.mode_frequencies)?;
    let n = crystal.n_ions();
    let eta = &crystal.lamb_dicke;
    let mut j = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a + 1..n {
            let sum: f64 = crystal
                .mode_frequencies
                .iter()
                .enumerate()
                .map(|(m, &w)| eta[(a, m)] * eta[(b, m)] * w / (mu * mu - w * w))
                .sum();
            let v = -rabi[a] * rabi[b] * sum;
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    Ok(CouplingMatrix { j })
}

fn check_index(what: &str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::InvalidArgument(format!(
            "{what} index {index} out of range (have {len})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::angular;
    use crate::crystal::{build_crystal, TrapConfig};
    use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

    fn two_ion() -> IonCrystal {
        build_crystal(
            &TrapConfig::from_hz(2, 0.616e6, 3.5838e6)
                .unwrap()
                .with_mass_amu(171.0),
        )
        .unwrap()
    }

    fn three_ion() -> IonCrystal {
        build_crystal(
            &TrapConfig::from_hz(3, 1.484e6, 3.952e6)
                .unwrap()
                .with_mass_amu(171.0),
        )
        .unwrap()
    }

    /// Bisecting gate with the analytic ηΩ = δ/(2√2), η the rms Lamb-Dicke.
    fn bisecting_gate(c: &IonCrystal) -> (Drive, f64) {
        let w = &c.mode_frequencies;
        let mu = 0.5 * (w[0] + w[1]);
        let delta = w[0] - mu;
        let tau_g = 2.0 * PI / delta;
        let eta_rms = (c.lamb_dicke.iter().map(|x| x * x).sum::<f64>() / 4.0).sqrt();
        let rabi = delta / (2.0 * SQRT_2) / eta_rms;
        (Drive::uniform(mu, rabi, 2, tau_g).unwrap(), tau_g)
    }

    #[test]
    fn alpha_and_chi_vanish_at_zero_time() {
        let c = two_ion();
        let (d, _) = bisecting_gate(&c);
        for m in 0..2 {
            assert_eq!(displacement_alpha(&c, &d, 0, m, 0.0).unwrap().norm(), 0.0);
        }
        assert!(chi_coupling(&c, &d, 0, 1, 0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gate_loop_closes_and_chi_hits_quarter_pi() {
        let c = two_ion();
        let (d, tau_g) = bisecting_gate(&c);
        for i in 0..2 {
            for m in 0..2 {
                let a = displacement_alpha(&c, &d, i, m, tau_g).unwrap();
                assert!(a.norm() < 0.01, "|alpha_{i}{m}| = {}", a.norm());
            }
        }
        let chi = chi_coupling(&c, &d, 0, 1, tau_g).unwrap();
        assert!((chi - FRAC_PI_4).abs() < 0.02 * FRAC_PI_4, "chi = {chi}");
    }

    #[test]
    fn slow_regime_displacement_envelope() {
        let c = two_ion();
        let w = c.mode_frequencies[0];
        let eta = c.lamb_dicke[(0, 0)];
        let rabi = angular(20e3) / eta;
        let mu = w + 10.0 * eta * rabi;
        let d = Drive::uniform(mu, rabi, 2, 0.0).unwrap();
        let envelope = 2.0 * eta * rabi * mu / (mu * mu - w * w).abs();
        let period = 2.0 * PI / (mu - w);
        let max = (0..=4000)
            .map(|k| {
                let tau = 2.0 * period * k as f64 / 4000.0;
                displacement_alpha(&c, &d, 0, 0, tau).unwrap().norm()
            })
            .fold(0.0, f64::max);
        assert!(max <= envelope * (1.0 + 1e-3), "{max} vs {envelope}");
        assert!(max > 0.9 * envelope);
        assert!((envelope - 0.1).abs() < 0.005);
    }

    #[test]
    fn exact_resonance_rejected() {
        let c = two_ion();
        let d = Drive::uniform(c.mode_frequencies[1], 1e5, 2, 1e-5).unwrap();
        assert!(matches!(
            displacement_alpha(&c, &d, 0, 0, 1e-5),
            Err(Error::Resonance { mode: 1, .. })
        ));
        assert!(matches!(ising_matrix(&c, &d), Err(Error::Resonance { .. })));
    }

    #[test]
    fn chi_requires_distinct_ions() {
        let c = two_ion();
        let (d, tau) = bisecting_gate(&c);
        assert!(chi_coupling(&c, &d, 1, 1, tau).is_err());
    }

    #[test]
    fn ising_symmetric_zero_diagonal() {
        let c = three_ion();
        let d = Drive::new(
            c.mode_frequencies[0] + angular(50e3),
            vec![1e6, 1.1e6, 0.9e6],
            0.0,
        )
        .unwrap();
        let j = ising_matrix(&c, &d).unwrap();
        for a in 0..3 {
            assert_eq!(j.get(a, a), 0.0);
            for b in 0..3 {
                assert_eq!(j.get(a, b), j.get(b, a));
            }
        }
    }

    #[test]
    fn dipolar_limit_three_ions() {
        // Weak axial confinement: mode bandwidth ~10 kHz, far below δ.
        let c = build_crystal(&TrapConfig::from_hz(3, 0.2e6, 5.0e6).unwrap()).unwrap();
        let d = Drive::uniform(c.mode_frequencies[0] + angular(1e6), 1e6, 3, 0.0).unwrap();
        let j = ising_matrix(&c, &d).unwrap();
        let ratio = j.get(0, 2) / j.get(0, 1);
        assert!((ratio - 0.125).abs() < 0.125 * 0.05, "ratio {ratio}");
    }

    #[test]
    fn sign_flips_across_each_mode() {
        for c in [two_ion(), three_ion()] {
            let n = c.n_ions();
            for (m, &w) in c.mode_frequencies.iter().enumerate() {
                let below = Drive::uniform(w - angular(10.0), 1e5, n, 0.0).unwrap();
                let above = Drive::uniform(w + angular(10.0), 1e5, n, 0.0).unwrap();
                let jb = ising_matrix(&c, &below).unwrap();
                let ja = ising_matrix(&c, &above).unwrap();
                for (a, b) in jb.pairs() {
                    if (c.mode_matrix[(a, m)] * c.mode_matrix[(b, m)]).abs() < 1e-6 {
                        continue;
                    }
                    assert!(jb.get(a, b) * ja.get(a, b) < 0.0);
                }
            }
        }
    }

    #[test]
    fn single_mode_dominant_value() {
        let c = two_ion();
        let w1 = c.mode_frequencies[0];
        let mu = w1 - angular(10e3);
        let rabi = 2e5;
        let d = Drive::uniform(mu, rabi, 2, 0.0).unwrap();
        let j = ising_matrix(&c, &d).unwrap().get(0, 1);
        let eta = c.lamb_dicke[(0, 0)];
        let approx = -rabi * rabi * eta * eta / (2.0 * (mu - w1));
        // The tilt mode sits ~43 kHz away and adds about 23% with the same sign.
        assert!(j > 0.0);
        assert!((j - approx).abs() < 0.35 * approx, "{j} vs {approx}");
    }

    #[test]
    fn chi_formulas_differ_by_bounded_term() {
        let c = two_ion();
        let (d, _) = bisecting_gate(&c);
        for k in 1..50 {
            let tau = k as f64 * 1.3e-6;
            let p = chi_coupling_with(&c, &d, 0, 1, tau, ChiFormula::Standard).unwrap();
            let e = chi_coupling_with(&c, &d, 0, 1, tau, ChiFormula::ExactMagnus).unwrap();
            let bound: f64 = (0..2)
                .map(|m| {
                    (c.lamb_dicke[(0, m)] * c.lamb_dicke[(1, m)]).abs() * d.rabi[0] * d.rabi[1]
                        / (2.0 * d.mu * c.mode_frequencies[m])
                })
                .sum();
            assert!((p - e).abs() <= bound * (1.0 + 1e-9));
        }
    }
}

#[cfg(test)]
mod properties {
    use proptest::prelude::*;

    use super::*;
    use crate::spinmotion::strategies::{crystal_and_drive, off_resonant_mu};

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn mirrored_drive_gives_mirrored_couplings(
            (c, rabi, tau) in crystal_and_drive(),
            offset_hz in -6.0e5..2.0e5f64,
        ) {
            let n = c.n_ions();
            let mu = off_resonant_mu(&c, offset_hz);
            let reversed: Vec<f64> = rabi.iter().rev().copied().collect();
            let chi = chi_matrix(&c, &Drive::new(mu, rabi, tau).unwrap(), tau, ChiFormula::Standard).unwrap();
            let mirror = chi_matrix(&c, &Drive::new(mu, reversed, tau).unwrap(), tau, ChiFormula::Standard).unwrap();
            let scale = chi.amax().max(f64::MIN_POSITIVE);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((chi[(i, j)] - mirror[(n - 1 - i, n - 1 - j)]).abs() <= 1e-12 * scale);
                }
            }
        }

        #[test]
        fn ising_couplings_scale_with_rabi_product(
            (c, rabi, _tau) in crystal_and_drive(),
            offset_hz in -6.0e5..2.0e5f64,
            s in 0.1..10.0f64,
        ) {
            let mu = off_resonant_mu(&c, offset_hz);
            let scaled: Vec<f64> = rabi.iter().map(|r| r * s).collect();
            let j = ising_matrix(&c, &Drive::new(mu, rabi, 0.0).unwrap()).unwrap();
            let js = ising_matrix(&c, &Drive::new(mu, scaled, 0.0).unwrap()).unwrap();
            for (a, b) in j.pairs().into_iter().map(|(i, k)| (j.get(i, k), js.get(i, k))) {
                prop_assert!((b - s * s * a).abs() <= 1e-12 * (s * s * a).abs());
            }
        }
    }
}
