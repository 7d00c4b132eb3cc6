//! Truncated-Fock integration of the interaction Hamiltonian
//!
//!   H(t)/ħ = Σ_i Ω_i σ_x^(i) sin(μt) Σ_m η_{i,m}(a_m e^{−iω_m t} + a_m† e^{iω_m t})
//!
//! with fixed-step RK4. H(t) commutes with every σ_x^(i), and distinct modes
//! commute, so [`integrate_hamiltonian`] integrates each (σ_x configuration,
//! mode) block separately; the block dynamics are still the full numerical
//! solution of the Schrödinger equation in that block. [`integrate_full`]
//! integrates the unreduced tensor-product state vector and exists to check
//! the block decomposition on small problems.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::crystal::IonCrystal;
use crate::error::{Error, Result};
use crate::spinmotion::{Drive, SpinDensity};

pub const DEFAULT_AMPLITUDE_CAP: usize = 2_000_000;
/// Thermal distributions are cut once this much weight is included.
pub const THERMAL_WEIGHT_CUTOFF: f64 = 0.999;
pub const NORM_TOLERANCE: f64 = 1e-8;
/// Default step is the beatnote period divided by this.
pub const STEPS_PER_BEAT: f64 = 200.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FockSpec {
    /// Highest retained Fock level per mode.
    pub n_max: usize,
    /// Integrator step, s. `None` selects (2π/μ)/200.
    pub dt: Option<f64>,
    /// Initial thermal occupation per mode.
    pub nbar: Vec<f64>,
    pub max_amplitudes: usize,
}

impl FockSpec {
    pub fn new(n_max: usize, nbar: Vec<f64>) -> Self {
        FockSpec {
            n_max,
            dt: None,
            nbar,
            max_amplitudes: DEFAULT_AMPLITUDE_CAP,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_n_max(&self, n_max: usize) -> Self {
        FockSpec {
            n_max,
            ..self.clone()
        }
    }

    fn step(&self, mu: f64) -> f64 {
        self.dt.unwrap_or(2.0 * PI / mu / STEPS_PER_BEAT)
    }

    fn validate(&self, crystal: &IonCrystal, drive: &Drive) -> Result<()> {
        drive.check_against(crystal)?;
        if self.n_max < 1 {
            return Err(Error::InvalidArgument("n_max must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::InvalidArgument(format!("invalid step {dt}")));
            }
        }
        if self.nbar.len() != crystal.n_modes() {
            return Err(Error::DimensionMismatch {
                what: "thermal occupations",
                expected: crystal.n_modes(),
                found: self.nbar.len(),
            });
        }
        if let Some(n) = self.nbar.iter().find(|n| !(n.is_finite() && **n >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid occupation {n}")));
        }
        let required = (self.n_max + 1)
            .checked_pow(crystal.n_modes() as u32)
            .and_then(|d| d.checked_mul(1usize << crystal.n_ions()))
            .unwrap_or(usize::MAX);
        if required > self.max_amplitudes {
            return Err(Error::DimensionCap {
                required,
                cap: self.max_amplitudes,
            });
        }
        Ok(())
    }
}

/// Populations P_n sampled at the requested times.
#[derive(Clone, Debug)]
pub struct FockRun {
    pub times: Vec<f64>,
    /// `populations[q][n]` at `times[q]`.
    pub populations: Vec<Vec<f64>>,
    /// Reduced spin state at the last sample time.
    pub final_state: SpinDensity,
    /// Largest |‖ψ‖² − 1| seen over all trajectories and samples.
    pub norm_drift: f64,
    /// RK4 steps per trajectory.
    pub steps: usize,
}

/// Truncated geometric distribution, renormalized.
pub fn thermal_weights(nbar: f64, n_max: usize) -> Vec<f64> {
    if nbar == 0.0 {
        return vec![1.0];
    }
    let ratio = nbar / (1.0 + nbar);
    let mut weights = Vec::new();
    let mut p = 1.0 / (1.0 + nbar);
    let mut total = 0.0;
    for _ in 0..=n_max {
        weights.push(p);
        total += p;
        if total > THERMAL_WEIGHT_CUTOFF {
            break;
        }
        p *= ratio;
    }
    weights.iter().map(|w| w / total).collect()
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    if times[0] < 0.0 || !times.iter().all(|t| t.is_finite()) {
        return Err(Error::InvalidArgument(
            "times must be finite and non-negative".into(),
        ));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "times must be non-decreasing".into(),
        ));
    }
    Ok(())
}

/// Fixed RK4 step sequence hitting every sample time exactly.
fn step_schedule(times: &[f64], dt: f64) -> Vec<(usize, f64)> {
    let mut prev = 0.0;
    times
        .iter()
        .map(|&t| {
            let span = t - prev;
            prev = t;
            let k = (span / dt).ceil() as usize;
            if k == 0 {
                (0, 0.0)
            } else {
                (k, span / k as f64)
            }
        })
        .collect()
}

/// Batch of single-mode state vectors driven with one force amplitude.
struct ModeBlock {
    force: f64,
    omega: f64,
    mu: f64,
    dim: usize,
    sqrt_n: Vec<f64>,
    /// Flat `[trajectory][level]`.
    psi: Vec<Complex64>,
}

impl ModeBlock {
    fn new(force: f64, omega: f64, mu: f64, n_max: usize, levels: usize) -> Self {
        let dim = n_max + 1;
        let mut psi = vec![Complex64::from(0.0); levels * dim];
        for n in 0..levels {
            psi[n * dim + n] = Complex64::from(1.0);
        }
        ModeBlock {
            force,
            omega,
            mu,
            dim,
            sqrt_n: (0..=dim).map(|n| (n as f64).sqrt()).collect(),
            psi,
        }
    }

    /// out = −i H(t) ψ for every trajectory.
    fn derivative(&self, t: f64, psi: &[Complex64], out: &mut [Complex64]) {
        let c = Complex64::from_polar(self.force * (self.mu * t).sin(), -self.omega * t);
        let lower = Complex64::new(0.0, -1.0) * c;
        let raise = Complex64::new(0.0, -1.0) * c.conj();
        let d = self.dim;
        for (chunk, o) in psi.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for n in 0..d {
                let mut acc = Complex64::from(0.0);
                if n + 1 < d {
                    acc += lower * self.sqrt_n[n + 1] * chunk[n + 1];
                }
                if n > 0 {
                    acc += raise * self.sqrt_n[n] * chunk[n - 1];
                }
                o[n] = acc;
            }
        }
    }

    fn advance(&mut self, t0: f64, h: f64, steps: usize) {
        let len = self.psi.len();
        let mut k1 = vec![Complex64::from(0.0); len];
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let mut tmp = k1.clone();
        for s in 0..steps {
            let t = t0 + s as f64 * h;
            self.derivative(t, &self.psi, &mut k1);
            axpy(&mut tmp, &self.psi, &k1, 0.5 * h);
            self.derivative(t + 0.5 * h, &tmp, &mut k2);
            axpy(&mut tmp, &self.psi, &k2, 0.5 * h);
            self.derivative(t + 0.5 * h, &tmp, &mut k3);
            axpy(&mut tmp, &self.psi, &k3, h);
            self.derivative(t + h, &tmp, &mut k4);
            let w = h / 6.0;
            for q in 0..len {
                self.psi[q] += (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]) * w;
            }
        }
    }

    fn norm_drift(&self) -> f64 {
        self.psi
            .chunks_exact(self.dim)
            .map(|c| (c.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn axpy(out: &mut [Complex64], x: &[Complex64], k: &[Complex64], a: f64) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + ki * a;
    }
}

/// Spin eigenvalue of ion `i` in σ_x-basis index `k` (clear bit → +1).
fn spin_sign(k: usize, i: usize, n: usize) -> f64 {
    if k >> (n - 1 - i) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Integrates from `initial` ⊗ thermal motion and reports P_n at `times`.
pub fn integrate_hamiltonian(
    crystal: &IonCrystal,
    drive: &Drive,
    spec: &FockSpec,
    initial: &SpinDensity,
    times: &[f64],
) -> Result<FockRun> {
    spec.validate(crystal, drive)?;
    check_times(times)?;
    let n = crystal.n_ions();
    if initial.n_ions() != n {
        return Err(Error::DimensionMismatch {
            what: "initial spin state",
            expected: n,
            found: initial.n_ions(),
        });
    }
    let dim = 1usize << n;
    let n_modes = crystal.n_modes();
    let dt = spec.step(drive.mu);
    let schedule = step_schedule(times, dt);
    let total_steps: usize = schedule.iter().map(|(k, _)| k).sum();

    // Group σ_x configurations by their force on each mode.
    let mut slot_of = vec![vec![0usize; dim]; n_modes];
    let mut jobs: Vec<(usize, f64)> = Vec::new();
    let mut first_job = vec![0usize; n_modes];
    for m in 0..n_modes {
        first_job[m] = jobs.len();
        let mut seen: HashMap<u64, usize> = HashMap::new();
        for k in 0..dim {
            let f: f64 = (0..n)
                .map(|i| spin_sign(k, i, n) * drive.rabi[i] * crystal.lamb_dicke[(i, m)])
                .sum();
            let f = if f == 0.0 { 0.0 } else { f };
            let next = seen.len();
            let slot = *seen.entry(f.to_bits()).or_insert(next);
            if slot == next {
                jobs.push((m, f));
            }
            slot_of[m][k] = slot;
        }
    }

    let weights: Vec<Vec<f64>> = spec
        .nbar
        .iter()
        .map(|&nb| thermal_weights(nb, spec.n_max))
        .collect();

    // Each job returns its trajectory snapshots at every sample time.
    let results: Vec<(Vec<Vec<Complex64>>, f64)> = jobs
        .par_iter()
        .map(|&(m, f)| {
            let mut block = ModeBlock::new(
                f,
                crystal.mode_frequencies[m],
                drive.mu,
                spec.n_max,
                weights[m].len(),
            );
            let mut t = 0.0;
            let mut snapshots = Vec::with_capacity(times.len());
            let mut drift: f64 = 0.0;
            for (&(k, h), &target) in schedule.iter().zip(times) {
                block.advance(t, h, k);
                t = target;
                drift = drift.max(block.norm_drift());
                snapshots.push(block.psi.clone());
            }
            (snapshots, drift)
        })
        .collect();

    let norm_drift = results.iter().map(|r| r.1).fold(0.0, f64::max);
    if norm_drift > NORM_TOLERANCE {
        return Err(Error::NormDrift { drift: norm_drift });
    }

    let rho_x0 = initial.hadamard_all().into_matrix();
    let levels = spec.n_max + 1;
    let mut populations = Vec::with_capacity(times.len());
    let mut final_state = initial.clone();
    for q in 0..times.len() {
        // Thermally averaged overlaps Σ_n p(n)⟨ψ_{v,n}|ψ_{u,n}⟩ per mode.
        let overlaps: Vec<DMatrix<Complex64>> = (0..n_modes)
            .map(|m| {
                let start = first_job[m];
                let end = if m + 1 < n_modes {
                    first_job[m + 1]
                } else {
                    jobs.len()
                };
                let slots = end - start;
                DMatrix::from_fn(slots, slots, |u, v| {
                    let pu = &results[start + u].0[q];
                    let pv = &results[start + v].0[q];
                    weights[m]
                        .iter()
                        .enumerate()
                        .map(|(lvl, w)| {
                            let a = &pu[lvl * levels..(lvl + 1) * levels];
                            let b = &pv[lvl * levels..(lvl + 1) * levels];
                            let inner: Complex64 = a.iter().zip(b).map(|(x, y)| y.conj() * x).sum();
                            inner * *w
                        })
                        .sum()
                })
            })
            .collect();
        let rho_x = DMatrix::from_fn(dim, dim, |a, b| {
            let mut z = rho_x0[(a, b)];
            for m in 0..n_modes {
                z *= overlaps[m][(slot_of[m][a], slot_of[m][b])];
            }
            z
        });
        let state = SpinDensity::from_matrix(n, rho_x)?.hadamard_all();
        populations.push(state.populations());
        final_state = state;
    }

    Ok(FockRun {
        times: times.to_vec(),
        populations,
        final_state,
        norm_drift,
        steps: total_steps,
    })
}

/// Unreduced tensor-product integration from a pure spin state. The state
/// index is `spin * D_motion + motional`, with mode 0 the slowest-varying
/// motional digit.
pub fn integrate_full(
    crystal: &IonCrystal,
    drive: &Drive,
    spec: &FockSpec,
    spin_state: &[Complex64],
    times: &[f64],
) -> Result<FockRun> {
    spec.validate(crystal, drive)?;
    check_times(times)?;
    let n = crystal.n_ions();
    let n_spin = 1usize << n;
    if spin_state.len() != n_spin {
        return Err(Error::DimensionMismatch {
            what: "spin state vector",
            expected: n_spin,
            found: spin_state.len(),
        });
    }
    let n_modes = crystal.n_modes();
    let levels = spec.n_max + 1;
    let d_motion = levels.pow(n_modes as u32);
    let total = n_spin * d_motion;
    let strides: Vec<usize> = (0..n_modes)
        .map(|m| levels.pow((n_modes - 1 - m) as u32))
        .collect();
    let digit = |idx: usize, m: usize| (idx / strides[m]) % levels;

    let dt = spec.step(drive.mu);
    let schedule = step_schedule(times, dt);
    let weights: Vec<Vec<f64>> = spec
        .nbar
        .iter()
        .map(|&nb| thermal_weights(nb, spec.n_max))
        .collect();

    // Enumerate thermal initial Fock products.
    let mut initials: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
    for w in &weights {
        initials = initials
            .into_iter()
            .flat_map(|(occ, p)| {
                w.iter().enumerate().map(move |(k, wk)| {
                    let mut o = occ.clone();
                    o.push(k);
                    (o, p * wk)
                })
            })
            .collect();
    }

    let norm: f64 = spin_state.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let sqrt_n: Vec<f64> = (0..=levels).map(|k| (k as f64).sqrt()).collect();
    let derivative = |t: f64, psi: &[Complex64], out: &mut [Complex64]| {
        out.iter_mut().for_each(|z| *z = Complex64::from(0.0));
        let s = (drive.mu * t).sin();
        for m in 0..n_modes {
            let c = Complex64::from_polar(s, -crystal.mode_frequencies[m] * t);
            for i in 0..n {
                let g = drive.rabi[i] * crystal.lamb_dicke[(i, m)];
                if g == 0.0 {
                    continue;
                }
                let flip = 1usize << (n - 1 - i);
                let lower = Complex64::new(0.0, -g) * c;
                let raise = Complex64::new(0.0, -g) * c.conj();
                for idx in 0..total {
                    let spin = idx / d_motion;
                    let mot = idx % d_motion;
                    let target_spin = spin ^ flip;
                    let k = digit(mot, m);
                    let amp = psi[idx];
                    // a|k⟩ = √k|k−1⟩, a†|k⟩ = √(k+1)|k+1⟩
                    if k > 0 {
                        out[target_spin * d_motion + mot - strides[m]] += lower * sqrt_n[k] * amp;
                    }
                    if k + 1 < levels {
                        out[target_spin * d_motion + mot + strides[m]] +=
                            raise * sqrt_n[k + 1] * amp;
                    }
                }
            }
        }
    };

    let mut pops = vec![vec![0.0; n + 1]; times.len()];
    let mut rho_final = DMatrix::<Complex64>::zeros(n_spin, n_spin);
    let mut drift: f64 = 0.0;
    let mut steps = 0;
    for (occ, p) in &initials {
        let mot0: usize = occ.iter().zip(&strides).map(|(k, s)| k * s).sum();
        let mut psi = vec![Complex64::from(0.0); total];
        for (s, amp) in spin_state.iter().enumerate() {
            psi[s * d_motion + mot0] = amp / norm;
        }
        let mut k1 = vec![Complex64::from(0.0); total];
        let (mut k2, mut k3, mut k4, mut tmp) = (k1.clone(), k1.clone(), k1.clone(), k1.clone());
        let mut t = 0.0;
        steps = 0;
        for (q, (&(k, h), &target)) in schedule.iter().zip(times).enumerate() {
            for st in 0..k {
                let ts = t + st as f64 * h;
                derivative(ts, &psi, &mut k1);
                axpy(&mut tmp, &psi, &k1, 0.5 * h);
                derivative(ts + 0.5 * h, &tmp, &mut k2);
                axpy(&mut tmp, &psi, &k2, 0.5 * h);
                derivative(ts + 0.5 * h, &tmp, &mut k3);
                axpy(&mut tmp, &psi, &k3, h);
                derivative(ts + h, &tmp, &mut k4);
                for j in 0..total {
                    psi[j] += (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0);
                }
            }
            steps += k;
            t = target;
            let nrm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            drift = drift.max((nrm - 1.0).abs());
            for (idx, z) in psi.iter().enumerate() {
                pops[q][(idx / d_motion).count_ones() as usize] += p * z.norm_sqr();
            }
            if q + 1 == times.len() {
                for a in 0..n_spin {
                    for b in 0..n_spin {
                        let mut acc = Complex64::from(0.0);
                        for mot in 0..d_motion {
                            acc += psi[a * d_motion + mot] * psi[b * d_motion + mot].conj();
                        }
                        rho_final[(a, b)] += acc * *p;
                    }
                }
            }
        }
    }
    if drift > NORM_TOLERANCE {
        return Err(Error::NormDrift { drift });
    }
    Ok(FockRun {
        times: times.to_vec(),
        populations: pops,
        final_state: SpinDensity::from_matrix(n, rho_final)?,
        norm_drift: drift,
        steps,
    })
}

/// Population drift between successive truncation levels.
#[derive(Clone, Debug)]
pub struct TruncationReport {
    pub levels: Vec<usize>,
    pub runs: Vec<FockRun>,
    /// `drifts[k]` = max |ΔP_n| between `levels[k]` and `levels[k+1]`.
    pub drifts: Vec<f64>,
}

impl TruncationReport {
    pub fn is_monotone(&self) -> bool {
        self.drifts.windows(2).all(|w| w[1] <= w[0])
    }
}

pub const DEFAULT_TRUNCATION_LADDER: [usize; 4] = [10, 15, 20, 25];

pub fn truncation_sweep(
    crystal: &IonCrystal,
    drive: &Drive,
    base: &FockSpec,
    initial: &SpinDensity,
    times: &[f64],
    levels: &[usize],
) -> Result<TruncationReport> {
    let runs = levels
        .iter()
        .map(|&l| integrate_hamiltonian(crystal, drive, &base.with_n_max(l), initial, times))
        .collect::<Result<Vec<_>>>()?;
    let drifts = runs
        .windows(2)
        .map(|w| max_population_difference(&w[0].populations, &w[1].populations))
        .collect();
    Ok(TruncationReport {
        levels: levels.to_vec(),
        runs,
        drifts,
    })
}

pub fn max_population_difference(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::angular;
    use crate::crystal::{build_crystal, TrapConfig};

    fn two_ion() -> IonCrystal {
        build_crystal(&TrapConfig::from_hz(2, 0.616e6, 3.5838e6).unwrap()).unwrap()
    }

    #[test]
    fn thermal_weights_cutoff() {
        assert_eq!(thermal_weights(0.0, 25), vec![1.0]);
        let w = thermal_weights(0.5, 25);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w.len(), 7);
        // Truncation at n_max takes precedence over the weight cutoff.
        assert_eq!(thermal_weights(5.0, 3).len(), 4);
    }

    #[test]
    fn zero_rabi_leaves_state_unchanged() {
        let c = two_ion();
        let d = Drive::uniform(angular(3.55e6), 0.0, 2, 0.0).unwrap();
        let run = integrate_hamiltonian(
            &c,
            &d,
            &FockSpec::new(5, vec![0.0, 0.0]),
            &SpinDensity::all_down(2).unwrap(),
            &[1e-6, 5e-6],
        )
        .unwrap();
        for p in &run.populations {
            assert!((p[0] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn block_integrator_matches_full_tensor_product() {
        let c = two_ion();
        let d = Drive::uniform(angular(3.5571e6), 2.0e5, 2, 0.0).unwrap();
        let spec = FockSpec::new(6, vec![0.3, 0.0]);
        let times = [3e-6, 8e-6];
        let mut psi = vec![Complex64::from(0.0); 4];
        psi[0] = Complex64::from(1.0);
        let block =
            integrate_hamiltonian(&c, &d, &spec, &SpinDensity::all_down(2).unwrap(), &times)
                .unwrap();
        let full = integrate_full(&c, &d, &spec, &psi, &times).unwrap();
        assert!(max_population_difference(&block.populations, &full.populations) < 1e-10);
        assert!((block.final_state.matrix() - full.final_state.matrix()).camax() < 1e-10);
        assert!(full.norm_drift < NORM_TOLERANCE);
    }

    #[test]
    fn dimension_cap_enforced() {
        let c = build_crystal(&TrapConfig::from_hz(3, 1.484e6, 3.952e6).unwrap()).unwrap();
        let d = Drive::uniform(angular(3.96e6), 1e5, 3, 0.0).unwrap();
        let spec = FockSpec::new(80, vec![0.0; 3]);
        let err = integrate_hamiltonian(&c, &d, &spec, &SpinDensity::all_down(3).unwrap(), &[1e-6])
            .unwrap_err();
        assert!(matches!(err, Error::DimensionCap { .. }));
    }

    #[test]
    fn halving_step_converges() {
        let c = two_ion();
        let d = Drive::uniform(angular(3.5571e6), 3.0e5, 2, 0.0).unwrap();
        let spec = FockSpec::new(12, vec![0.0, 0.0]);
        let dt = 2.0 * PI / d.mu / STEPS_PER_BEAT;
        let rho0 = SpinDensity::all_down(2).unwrap();
        let times = [1.0e-5, 2.0e-5];
        let a = integrate_hamiltonian(&c, &d, &spec.clone().with_dt(dt), &rho0, &times).unwrap();
        let b = integrate_hamiltonian(&c, &d, &spec.with_dt(dt / 2.0), &rho0, &times).unwrap();
        assert!(max_population_difference(&a.populations, &b.populations) < 1e-6);
    }

    #[test]
    fn bad_time_grid_rejected() {
        let c = two_ion();
        let d = Drive::uniform(angular(3.55e6), 1e5, 2, 0.0).unwrap();
        let spec = FockSpec::new(4, vec![0.0, 0.0]);
        let rho = SpinDensity::all_down(2).unwrap();
        assert!(integrate_hamiltonian(&c, &d, &spec, &rho, &[]).is_err());
        assert!(integrate_hamiltonian(&c, &d, &spec, &rho, &[2e-6, 1e-6]).is_err());
    }
}
