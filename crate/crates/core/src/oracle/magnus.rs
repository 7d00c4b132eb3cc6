//! Second-order Magnus coefficient of the interaction Hamiltonian by direct
//! numerical double integration.
//!
//! χ_{i,j}(τ) = Ω_iΩ_j Σ_m η_{i,m}η_{j,m}
//!     ∫₀^τ dt ∫₀^t dt′ sin(μt) sin(μt′) · 2 sin(ω_m(t − t′))

use std::f64::consts::PI;

use super::quadrature::{gk15, integrate};
use crate::crystal::IonCrystal;
use crate::error::{Error, Result};
use crate::spinmotion::Drive;

/// Per-panel tolerance relative to ∫|f| over the panel.
pub const MAGNUS_REL_TOL: f64 = 1e-12;

/// The double integral for one mode, s².
pub fn magnus_mode_kernel(mu: f64, w: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    // Dimensionless time x = μt, so ∫∫dt dt′ = μ⁻² ∫∫dx dx′.
    let r = w / mu;
    let x_end = mu * tau;
    // Panels span at most a quarter of the fastest beat (1 + r) so each is
    // resolved by a handful of Kronrod nodes.
    let width = PI / (2.0 * (1.0 + r));
    let n_panels = (x_end / width).ceil().max(1.0) as usize;

    let cos_part = |x: f64| x.sin() * (r * x).cos();
    let sin_part = |x: f64| x.sin() * (r * x).sin();

    let mut total = 0.0;
    // Running ∫₀^x sin x′ cos(r x′) dx′ and ∫₀^x sin x′ sin(r x′) dx′.
    let (mut c0, mut s0) = (0.0, 0.0);
    for p in 0..n_panels {
        let a = x_end * p as f64 / n_panels as f64;
        let b = x_end * (p + 1) as f64 / n_panels as f64;
        let outer = |x: f64| {
            // Sub-panel inner integrals: one Kronrod rule is exact to round-off.
            let c = c0 + gk15(&cos_part, a, x).0;
            let s = s0 + gk15(&sin_part, a, x).0;
            // 2 sin(r(x − x′)) = 2[sin(rx)cos(rx′) − cos(rx)sin(rx′)]
            x.sin() * 2.0 * ((r * x).sin() * c - (r * x).cos() * s)
        };
        let (rule, err, scale) = gk15(&outer, a, b);
        let tol = MAGNUS_REL_TOL * scale;
        total += if err <= tol {
            rule
        } else {
            integrate(&outer, a, b, tol).0
        };
        c0 += gk15(&cos_part, a, b).0;
        s0 += gk15(&sin_part, a, b).0;
    }
    total / (mu * mu)
}

/// Oracle value of χ_{i,j}(τ) from the Magnus double integral.
pub fn magnus_chi(
    crystal: &IonCrystal,
    drive: &Drive,
    i: usize,
    j: usize,
    tau: f64,
) -> Result<f64> {
    drive.validate()?;
    let n = crystal.n_ions();
    if drive.rabi.len() != n {
        return Err(Error::DimensionMismatch {
            what: "Rabi frequencies",
            expected: n,
            found: drive.rabi.len(),
        });
    }
    if i >= n || j >= n || i == j {
        return Err(Error::InvalidArgument(format!(
            "invalid ion pair ({i}, {j}) for {n} ions"
        )));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid duration {tau}")));
    }
    let eta = &crystal.lamb_dicke;
    let sum: f64 = crystal
        .mode_frequencies
        .iter()
        .enumerate()
        .map(|(m, &w)| eta[(i, m)] * eta[(j, m)] * magnus_mode_kernel(drive.mu, w, tau))
        .sum();
    Ok(drive.rabi[i] * drive.rabi[j] * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::angular;
    use crate::crystal::{build_crystal, TrapConfig};
    use crate::spinmotion::{chi_coupling_with, chi_mode_kernel, ChiFormula};

    #[test]
    fn zero_duration() {
        assert_eq!(magnus_mode_kernel(2.0e7, 2.2e7, 0.0), 0.0);
    }

    #[test]
    fn matches_exact_closed_form() {
        for &(mu, w, tau) in &[
            (angular(3.55e6), angular(3.5838e6), 3.7e-5),
            (angular(3.0e6), angular(3.5e6), 1.1e-5),
            (angular(4.1e6), angular(3.2e6), 2.3e-5),
        ] {
            let oracle = magnus_mode_kernel(mu, w, tau);
            let exact = chi_mode_kernel(mu, w, tau, ChiFormula::ExactMagnus);
            assert!(
                ((oracle - exact) / exact).abs() < 1e-8,
                "{oracle} vs {exact}"
            );
        }
    }

    #[test]
    fn secular_slope_of_oracle_matches_ising_term() {
        // Single mode, far detuned: χ(τ) ≈ −ω τ/(μ² − ω²) per unit coupling.
        let (mu, w) = (angular(4.5e6), angular(3.5e6));
        let taus: Vec<f64> = (1..=40).map(|k| k as f64 * 1.0e-6).collect();
        let ys: Vec<f64> = taus.iter().map(|&t| magnus_mode_kernel(mu, w, t)).collect();
        let n = taus.len() as f64;
        let (mt, my) = (taus.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = taus.iter().zip(&ys).map(|(t, y)| (t - mt) * (y - my)).sum();
        let var: f64 = taus.iter().map(|t| (t - mt).powi(2)).sum();
        let slope = cov / var;
        let secular = -w / (mu * mu - w * w);
        assert!(
            ((slope - secular) / secular).abs() < 1e-3,
            "{slope} vs {secular}"
        );
    }

    #[test]
    fn crystal_level_oracle() {
        let c = build_crystal(&TrapConfig::from_hz(2, 0.616e6, 3.5838e6).unwrap()).unwrap();
        let d = Drive::uniform(angular(3.5571e6), 2.0e5, 2, 0.0).unwrap();
        let tau = 2.0e-5;
        let oracle = magnus_chi(&c, &d, 0, 1, tau).unwrap();
        let exact = chi_coupling_with(&c, &d, 0, 1, tau, ChiFormula::ExactMagnus).unwrap();
        assert!(((oracle - exact) / exact).abs() < 1e-6);
        assert!(magnus_chi(&c, &d, 0, 0, tau).is_err());
    }
}
