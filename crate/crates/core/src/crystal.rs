//! Equilibrium structure and transverse normal modes of a linear ion chain.
//!
//! Positions are dimensionless, in units of the Coulomb length
//! ℓ = (e²/(4πϵ₀ M ω_z²))^(1/3). Transverse modes are sorted by descending
//! frequency so that mode 0 is the center-of-mass (CM) mode.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::constants::{
    angular, AMU, DEFAULT_RAMAN_WAVELENGTH, DEFAULT_WAVEVECTOR_FACTOR, ELEMENTARY_CHARGE,
    EPSILON_0, HBAR, YB171_MASS_AMU,
};
use crate::error::{Error, Result};

const MAX_NEWTON_ITERATIONS: usize = 200;
const POSITION_TOLERANCE: f64 = 1e-12;

/// Trap and Raman-laser parameters. Frequencies are stored in rad/s.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrapConfig {
    pub n_ions: usize,
    /// Axial CM frequency ω_z, rad/s.
    pub omega_z: f64,
    /// Transverse CM frequency ω_x, rad/s.
    pub omega_x: f64,
    /// Single-ion mass, kg.
    pub ion_mass: f64,
    /// Raman wavelength, m.
    pub raman_wavelength: f64,
    /// Geometry factor g with δk = g·2π/λ.
    pub wavevector_factor: f64,
}

impl TrapConfig {
    /// Builds a config from cyclic frequencies (Hz) with ¹⁷¹Yb⁺ defaults.
    pub fn from_hz(n_ions: usize, axial_hz: f64, transverse_hz: f64) -> Result<Self> {
        let cfg = TrapConfig {
            n_ions,
            omega_z: angular(axial_hz),
            omega_x: angular(transverse_hz),
            ion_mass: YB171_MASS_AMU * AMU,
            raman_wavelength: DEFAULT_RAMAN_WAVELENGTH,
            wavevector_factor: DEFAULT_WAVEVECTOR_FACTOR,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mass_amu(mut self, mass_amu: f64) -> Self {
        self.ion_mass = mass_amu * AMU;
        self
    }

    pub fn with_wavelength(mut self, wavelength: f64) -> Self {
        self.raman_wavelength = wavelength;
        self
    }

    pub fn with_wavevector_factor(mut self, factor: f64) -> Self {
        self.wavevector_factor = factor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(Error::InvalidArgument("n_ions must be at least 1".into()));
        }
        let positive = [
            ("omega_z", self.omega_z),
            ("omega_x", self.omega_x),
            ("ion_mass", self.ion_mass),
            ("raman_wavelength", self.raman_wavelength),
            ("wavevector_factor", self.wavevector_factor),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Trap anisotropy ε = ω_z/ω_x.
    pub fn anisotropy(&self) -> f64 {
        self.omega_z / self.omega_x
    }

    /// Raman wavevector difference δk, 1/m.
    pub fn delta_k(&self) -> f64 {
        self.wavevector_factor * 2.0 * PI / self.raman_wavelength
    }

    /// Coulomb length scale ℓ, m.
    pub fn length_scale(&self) -> f64 {
        let e2 = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;
        (e2 / (4.0 * PI * EPSILON_0 * self.ion_mass * self.omega_z * self.omega_z)).cbrt()
    }
}

/// Equilibrium structure plus transverse modes of an ion chain.
#[derive(Clone, Debug, Serialize)]
pub struct IonCrystal {
    pub trap: TrapConfig,
    /// Dimensionless positions u_i, ascending.
    pub scaled_positions: Vec<f64>,
    /// Transverse mode frequencies ω_m, rad/s, descending.
    pub mode_frequencies: Vec<f64>,
    /// b_{i,m}: row = ion, column = mode.
    #[serde(serialize_with = "serialize_matrix")]
    pub mode_matrix: DMatrix<f64>,
    /// η_{i,m}: row = ion, column = mode.
    #[serde(serialize_with = "serialize_matrix")]
    pub lamb_dicke: DMatrix<f64>,
}

impl IonCrystal {
    pub fn n_ions(&self) -> usize {
        self.trap.n_ions
    }

    pub fn n_modes(&self) -> usize {
        self.mode_frequencies.len()
    }

    /// Equilibrium positions in meters.
    pub fn positions(&self) -> Vec<f64> {
        let l = self.trap.length_scale();
        self.scaled_positions.iter().map(|u| u * l).collect()
    }
}

fn serialize_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

/// Scaled force on each ion: u_i − Σ_{j≠i} sign(u_i − u_j)/(u_i − u_j)².
fn force_residual(u: &[f64]) -> DVector<f64> {
    let n = u.len();
    DVector::from_fn(n, |i, _| {
        let coulomb: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d = u[i] - u[j];
                d.signum() / (d * d)
            })
            .sum();
        u[i] - coulomb
    })
}

fn force_jacobian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 1.0;
        for j in (0..n).filter(|&j| j != i) {
            let k = 2.0 / (u[i] - u[j]).abs().powi(3);
            diag += k;
            jac[(i, j)] = -k;
        }
        jac[(i, i)] = diag;
    }
    jac
}

fn symmetrize(u: &mut [f64]) {
    let n = u.len();
    for i in 0..n / 2 {
        let a = 0.5 * (u[n - 1 - i] - u[i]);
        u[i] = -a;
        u[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        u[n / 2] = 0.0;
    }
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Dimensionless equilibrium positions of `n_ions` in a harmonic well,
/// solved by damped Newton iteration on the force balance.
pub fn equilibrium_positions(n_ions: usize) -> Result<Vec<f64>> {
    if n_ions == 0 {
        return Err(Error::InvalidArgument("n_ions must be at least 1".into()));
    }
    if n_ions == 1 {
        return Ok(vec![0.0]);
    }
    let n = n_ions as f64;
    let spacing = 2.018 / n.powf(0.559);
    let mut u: Vec<f64> = (1..=n_ions)
        .map(|i| (i as f64 - (n + 1.0) / 2.0) * spacing)
        .collect();

    let mut residual = max_abs(&force_residual(&u));
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if residual < POSITION_TOLERANCE {
            break;
        }
        let f = force_residual(&u);
        let step = force_jacobian(&u)
            .lu()
            .solve(&f)
            .ok_or(Error::SolverFailure {
                iterations: 0,
                residual,
            })?;
        // Backtrack until the chain stays ordered and the residual drops.
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = u
                .iter()
                .zip(step.iter())
                .map(|(x, s)| x - lambda * s)
                .collect();
            let ordered = trial.windows(2).all(|w| w[1] > w[0]);
            if ordered {
                let r = max_abs(&force_residual(&trial));
                if r < residual || lambda < 1e-6 {
                    u = trial;
                    residual = r;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return Err(Error::SolverFailure {
                    iterations: MAX_NEWTON_ITERATIONS,
                    residual,
                });
            }
        }
    }
    symmetrize(&mut u);
    let residual = max_abs(&force_residual(&u));
    if residual >= POSITION_TOLERANCE {
        return Err(Error::SolverFailure {
            iterations: MAX_NEWTON_ITERATIONS,
            residual,
        });
    }
    Ok(u)
}

/// Transverse normal modes from the scaled Hessian
/// A_ij = δ_ij[(ω_x/ω_z)² − Σ_{p≠i}|u_i−u_p|⁻³] + (1−δ_ij)|u_i−u_j|⁻³.
///
/// Returns frequencies (rad/s, descending) and the mode matrix with
/// columns normalized and sign-fixed so that Σ_i b_{i,m} ≥ 0 (first
/// nonzero component positive when the sum vanishes).
pub fn transverse_modes(
    positions: &[f64],
    omega_z: f64,
    omega_x: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = positions.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty ion chain".into()));
    }
    let beta2 = (omega_x / omega_z).powi(2);
    let mut hessian = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = beta2;
        for j in (0..n).filter(|&j| j != i) {
            let k = (positions[i] - positions[j]).abs().powi(-3);
            diag -= k;
            hessian[(i, j)] = k;
        }
        hessian[(i, i)] = diag;
    }

    let eig = SymmetricEigen::new(hessian);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut frequencies = Vec::with_capacity(n);
    let mut modes = DMatrix::zeros(n, n);
    for (m, &k) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        if !(lambda > 0.0) {
            return Err(Error::ZigzagInstability {
                mode: m,
                eigenvalue: lambda,
            });
        }
        frequencies.push(omega_z * lambda.sqrt());
        let mut col = eig.eigenvectors.column(k).clone_owned();
        col /= col.norm();
        let sum: f64 = col.iter().sum();
        let flip = if sum.abs() > 1e-10 {
            sum < 0.0
        } else {
            col.iter()
                .find(|x| x.abs() > 1e-10)
                .is_some_and(|&x| x < 0.0)
        };
        if flip {
            col = -col;
        }
        modes.set_column(m, &col);
    }

    // The CM mode does not feel the Coulomb interaction.
    frequencies[0] = omega_x;
    modes.column_mut(0).fill(1.0 / (n as f64).sqrt());

    Ok((frequencies, modes))
}

/// η_{i,m} = b_{i,m}·δk·√(ħ/(2 M ω_m)).
pub fn lamb_dicke(
    mode_frequencies: &[f64],
    mode_matrix: &DMatrix<f64>,
    trap: &TrapConfig,
) -> Result<DMatrix<f64>> {
    if mode_matrix.ncols() != mode_frequencies.len() {
        return Err(Error::DimensionMismatch {
            what: "mode matrix columns",
            expected: mode_frequencies.len(),
            found: mode_matrix.ncols(),
        });
    }
    if let Some(bad) = mode_frequencies.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "mode frequency must be positive, got {bad}"
        )));
    }
    let dk = trap.delta_k();
    let mut eta = mode_matrix.clone();
    for (m, &w) in mode_frequencies.iter().enumerate() {
        let x0 = (HBAR / (2.0 * trap.ion_mass * w)).sqrt();
        eta.column_mut(m).scale_mut(dk * x0);
    }
    Ok(eta)
}

pub fn build_crystal(trap: &TrapConfig) -> Result<IonCrystal> {
    trap.validate()?;
    let scaled_positions = equilibrium_positions(trap.n_ions)?;
    let (mode_frequencies, mode_matrix) =
        transverse_modes(&scaled_positions, trap.omega_z, trap.omega_x)?;
    let lamb_dicke = lamb_dicke(&mode_frequencies, &mode_matrix, trap)?;
    Ok(IonCrystal {
        trap: trap.clone(),
        scaled_positions,
        mode_frequencies,
        mode_matrix,
        lamb_dicke,
    })
}
