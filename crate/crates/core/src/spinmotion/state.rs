//! Reduced spin density matrices in the σ_z product basis.
//!
//! Basis index bit `n-1-i` holds ion `i` (ion 0 is the most significant bit);
//! a set bit means |↑⟩. The Hamming weight of an index is therefore the
//! number of ions in |↑⟩.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest chain handled by the dense 2^N × 2^N representation.
pub const MAX_SPINS: usize = 14;

type Unitary2 = [[Complex64; 2]; 2];

#[derive(Clone, Debug, PartialEq)]
pub struct SpinDensity {
    n_ions: usize,
    rho: DMatrix<Complex64>,
}

impl SpinDensity {
    pub fn from_matrix(n_ions: usize, rho: DMatrix<Complex64>) -> Result<Self> {
        check_spin_count(n_ions)?;
        let dim = 1usize << n_ions;
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::DimensionMismatch {
                what: "spin density matrix",
                expected: dim,
                found: rho.nrows(),
            });
        }
        Ok(SpinDensity { n_ions, rho })
    }

    /// Density matrix of a pure state; the amplitudes are normalized.
    pub fn from_pure(n_ions: usize, amplitudes: &[Complex64]) -> Result<Self> {
        check_spin_count(n_ions)?;
        let dim = 1usize << n_ions;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "state vector",
                expected: dim,
                found: amplitudes.len(),
            });
        }
        let psi = DVector::from_column_slice(amplitudes);
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let psi = psi / Complex64::from(norm);
        Ok(SpinDensity {
            n_ions,
            rho: &psi * psi.adjoint(),
        })
    }

    /// |↓…↓⟩, the optically pumped initial state.
    pub fn all_down(n_ions: usize) -> Result<Self> {
        check_spin_count(n_ions)?;
        let dim = 1usize << n_ions;
        let mut rho = DMatrix::zeros(dim, dim);
        rho[(0, 0)] = Complex64::from(1.0);
        Ok(SpinDensity { n_ions, rho })
    }

    pub fn maximally_mixed(n_ions: usize) -> Result<Self> {
        check_spin_count(n_ions)?;
        let dim = 1usize << n_ions;
        let rho = DMatrix::identity(dim, dim) / Complex64::from(dim as f64);
        Ok(SpinDensity { n_ions, rho })
    }

    pub fn n_ions(&self) -> usize {
        self.n_ions
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|z| z.re).sum()
    }

    /// Probability of each basis bitstring.
    pub fn bitstring_probabilities(&self) -> Vec<f64> {
        self.rho.diagonal().iter().map(|z| z.re).collect()
    }

    /// P_n: probability of exactly n ions in |↑⟩, n = 0…N.
    pub fn populations(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n_ions + 1];
        for (k, z) in self.rho.diagonal().iter().enumerate() {
            p[k.count_ones() as usize] += z.re;
        }
        p
    }

    /// Parity Σ_n (−1)^n P_n.
    pub fn parity(&self) -> f64 {
        self.populations()
            .iter()
            .enumerate()
            .map(|(n, p)| if n % 2 == 0 { *p } else { -*p })
            .sum()
    }

    /// ⟨ψ|ρ|ψ⟩ for a normalized pure target.
    pub fn fidelity_with(&self, target: &[Complex64]) -> Result<f64> {
        if target.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "target state",
                expected: self.dim(),
                found: target.len(),
            });
        }
        let psi = DVector::from_column_slice(target);
        let norm2 = psi.norm_squared();
        Ok((psi.adjoint() * &self.rho * &psi)[(0, 0)].re / norm2)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * Complex64::from(0.5);
        h.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint())
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Hermitian, unit trace and positive semidefinite within `tol`.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        let herm = self.hermiticity_error();
        let trace = self.trace();
        let min_eig = self.min_eigenvalue();
        if herm > tol || (trace - 1.0).abs() > tol || min_eig < -tol {
            return Err(Error::InvalidArgument(format!(
                "unphysical density matrix: hermiticity error {herm:e}, trace {trace}, min eigenvalue {min_eig:e}"
            )));
        }
        Ok(())
    }

    /// Applies `u` to every ion: ρ → U ρ U† with U = u^{⊗N}.
    fn apply_global(&self, u: &Unitary2) -> Self {
        let mut rho = self.rho.clone();
        for q in 0..self.n_ions {
            apply_left(&mut rho, q, u);
            apply_right_adjoint(&mut rho, q, u);
        }
        SpinDensity {
            n_ions: self.n_ions,
            rho,
        }
    }

    /// Changes between the σ_z and σ_x product bases. The transform is its
    /// own inverse. In the σ_x basis a clear bit means s_i = +1.
    pub(crate) fn hadamard_all(&self) -> Self {
        let h = Complex64::from(FRAC_1_SQRT_2);
        self.apply_global(&[[h, h], [h, -h]])
    }
}

fn check_spin_count(n_ions: usize) -> Result<()> {
    if n_ions == 0 || n_ions > MAX_SPINS {
        return Err(Error::InvalidArgument(format!(
            "spin count must be in 1..={MAX_SPINS}, got {n_ions}"
        )));
    }
    Ok(())
}

/// Row/column index pairs that differ only in the bit of qubit `q`.
fn qubit_pairs(dim: usize, n_ions: usize, q: usize) -> impl Iterator<Item = (usize, usize)> {
    let bit = 1usize << (n_ions - 1 - q);
    (0..dim)
        .filter(move |k| k & bit == 0)
        .map(move |k| (k, k | bit))
}

fn apply_left(rho: &mut DMatrix<Complex64>, q: usize, u: &Unitary2) {
    let dim = rho.nrows();
    let n = dim.trailing_zeros() as usize;
    for (r0, r1) in qubit_pairs(dim, n, q) {
        for c in 0..dim {
            let (x0, x1) = (rho[(r0, c)], rho[(r1, c)]);
            rho[(r0, c)] = u[0][0] * x0 + u[0][1] * x1;
            rho[(r1, c)] = u[1][0] * x0 + u[1][1] * x1;
        }
    }
}

fn apply_right_adjoint(rho: &mut DMatrix<Complex64>, q: usize, u: &Unitary2) {
    let dim = rho.nrows();
    let n = dim.trailing_zeros() as usize;
    for (c0, c1) in qubit_pairs(dim, n, q) {
        for r in 0..dim {
            let (x0, x1) = (rho[(r, c0)], rho[(r, c1)]);
            rho[(r, c0)] = x0 * u[0][0].conj() + x1 * u[0][1].conj();
            rho[(r, c1)] = x0 * u[1][0].conj() + x1 * u[1][1].conj();
        }
    }
}

/// exp[−i(θ/2)(cos φ σ_x + sin φ σ_y)] in the (↓, ↑) basis.
fn rotation_matrix(angle: f64, phase: f64) -> Unitary2 {
    let c = Complex64::from((angle / 2.0).cos());
    let s = (angle / 2.0).sin();
    let minus_i = Complex64::new(0.0, -1.0);
    [
        [c, minus_i * s * Complex64::from_polar(1.0, phase)],
        [minus_i * s * Complex64::from_polar(1.0, -phase), c],
    ]
}

/// Global carrier rotation by `angle` about the equatorial axis at `phase`.
pub fn carrier_rotation(rho: &SpinDensity, angle: f64, phase: f64) -> SpinDensity {
    rho.apply_global(&rotation_matrix(angle, phase))
}

/// Parity after a π/2 analysis pulse at each phase.
pub fn parity_scan(rho: &SpinDensity, phases: &[f64]) -> Vec<f64> {
    phases
        .iter()
        .map(|&phi| carrier_rotation(rho, std::f64::consts::FRAC_PI_2, phi).parity())
        .collect()
}

/// Entanglement fidelity lower bound from populations and parity contrast.
pub fn fidelity_bound(p0_plus_pn: f64, parity_contrast: f64) -> Result<f64> {
    for (name, v) in [("P0+PN", p0_plus_pn), ("parity contrast", parity_contrast)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be a probability, got {v}"
            )));
        }
    }
    Ok((p0_plus_pn + parity_contrast) / 2.0)
}

/// (|↓↓⟩ + i|↑↑⟩)/√2.
pub fn bell_state() -> Vec<Complex64> {
    let r = FRAC_1_SQRT_2;
    vec![
        Complex64::from(r),
        Complex64::from(0.0),
        Complex64::from(0.0),
        Complex64::new(0.0, r),
    ]
}

/// (|↑…↑⟩ + |↓…↓⟩)/√2.
pub fn ghz_state(n_ions: usize) -> Vec<Complex64> {
    let dim = 1usize << n_ions;
    let mut psi = vec![Complex64::from(0.0); dim];
    psi[0] = Complex64::from(FRAC_1_SQRT_2);
    psi[dim - 1] += Complex64::from(FRAC_1_SQRT_2);
    psi
}
