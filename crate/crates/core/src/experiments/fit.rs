//! Secular-model fit of P_0(τ) for the Ising couplings.
//!
//! From all spins down under H = Σ_{i<j} J_{i,j} σ_x σ_x:
//!   N = 2: P_0 = cos²(Jτ)
//!   N = 3 (J_{1,2} = J_{2,3} = a, J_{1,3} = b):
//!          P_0 = ¼[cos²(2aτ) + 1 + 2 cos(2aτ) cos(2bτ)]
//! with an exponential relaxation toward the time average.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};

const MIN_POINTS: usize = 8;
const FLAT_STD: f64 = 1e-6;
const PEAK_FLOOR: f64 = 0.05;
const MAX_PEAKS: usize = 4;
/// The dominant spectral peak this close to Nyquist is treated as aliased.
const NYQUIST_MARGIN: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JFit {
    pub n_ions: usize,
    /// |J_{1,2}| for N = 2; |J_{1,2}|, |J_{1,3}| for N = 3. rad/s.
    pub couplings: Vec<f64>,
    /// Relaxation rate toward the time average, 1/s.
    pub decay_rate: f64,
    pub rms_residual: f64,
    /// Seeds tried.
    pub starts: usize,
}

/// Fits a P_0(τ) series starting from all spins down.
pub fn extract_j_from_timeseries(taus: &[f64], p0: &[f64], n_ions: usize) -> Result<JFit> {
    if !(n_ions == 2 || n_ions == 3) {
        return Err(Error::InvalidArgument(format!(
            "J extraction supports 2 or 3 ions, got {n_ions}"
        )));
    }
    if taus.len() != p0.len() {
        return Err(Error::DimensionMismatch {
            what: "time series",
            expected: taus.len(),
            found: p0.len(),
        });
    }
    if taus.len() < MIN_POINTS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_POINTS} samples, got {}",
            taus.len()
        )));
    }
    if taus.iter().chain(p0).any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "time series contains non-finite values".into(),
        ));
    }
    if !(taus[0] >= 0.0 && taus.windows(2).all(|w| w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "durations must be non-negative and strictly increasing".into(),
        ));
    }
    let mean = p0.iter().sum::<f64>() / p0.len() as f64;
    let std_dev = (p0.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / p0.len() as f64).sqrt();
    if std_dev < FLAT_STD {
        return Err(Error::FlatSignal { std_dev });
    }

    let span = taus[taus.len() - 1];
    let dt = (taus[taus.len() - 1] - taus[0]) / (taus.len() - 1) as f64;
    let nyquist = std::f64::consts::PI / dt;
    let peaks = spectral_peaks(taus, p0, mean);
    if peaks.is_empty() {
        return Err(Error::FitFailure("no spectral peak to seed the fit".into()));
    }
    if peaks[0] >= NYQUIST_MARGIN * nyquist {
        return Err(Error::Aliasing {
            frequency: peaks[0],
            nyquist,
        });
    }

    // Parameters are scaled by the record length: J·T and sqrt(γ·T).
    let decay_seed = (1.0f64 / 5.0).sqrt();
    let seeds: Vec<Vec<f64>> = coupling_seeds(&peaks, n_ions)
        .into_iter()
        .map(|js| {
            let mut p: Vec<f64> = js.iter().map(|j| j * span).collect();
            p.push(decay_seed);
            p
        })
        .collect();

    let x: Vec<f64> = taus.iter().map(|t| t / span).collect();
    let solver = LevenbergMarquardt::new().with_patience(200);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for seed in &seeds {
        let problem = SecularModel {
            n_ions,
            x: &x,
            y: p0,
            params: DVector::from_vec(seed.clone()),
        };
        let (fitted, report) = solver.minimize(problem);
        if !report.termination.was_successful() {
            continue;
        }
        let cost = fitted.cost();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, fitted.params.as_slice().to_vec()));
        }
    }
    let (cost, params) =
        best.ok_or_else(|| Error::FitFailure(format!("none of {} starts converged", seeds.len())))?;

    let couplings: Vec<f64> = params[..n_ions - 1]
        .iter()
        .map(|p| p.abs() / span)
        .collect();
    let decay_rate = params[n_ions - 1].powi(2) / span;
    let fastest = match n_ions {
        2 => 2.0 * couplings[0],
        _ => (4.0 * couplings[0]).max(2.0 * (couplings[0] + couplings[1])),
    };
    if fastest > nyquist {
        return Err(Error::Aliasing {
            frequency: fastest,
            nyquist,
        });
    }
    Ok(JFit {
        n_ions,
        couplings,
        decay_rate,
        rms_residual: (2.0 * cost / p0.len() as f64).sqrt(),
        starts: seeds.len(),
    })
}

impl JFit {
    /// Fitted P_0 at duration `tau`.
    pub fn predict(&self, tau: f64) -> f64 {
        let avg = time_average(self.n_ions);
        let decay = (-self.decay_rate * tau).exp();
        avg + decay * (secular_p0(self.n_ions, &self.couplings, tau) - avg)
    }
}

/// Angular frequencies of the strongest spectral peaks, strongest first.
fn spectral_peaks(taus: &[f64], y: &[f64], mean: f64) -> Vec<f64> {
    let n = taus.len();
    let (t0, t1) = (taus[0], taus[n - 1]);
    let dt = (t1 - t0) / (n - 1) as f64;
    // Linear resampling onto a uniform grid for the transform only.
    let mut k = 0;
    let uniform: Vec<f64> = (0..n)
        .map(|i| {
            let t = t0 + i as f64 * dt;
            while k + 2 < n && taus[k + 1] < t {
                k += 1;
            }
            let w = ((t - taus[k]) / (taus[k + 1] - taus[k])).clamp(0.0, 1.0);
            (1.0 - w) * y[k] + w * y[k + 1] - mean
        })
        .collect();

    let len = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = uniform
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag: Vec<f64> = buf[..=len / 2].iter().map(|c| c.norm()).collect();

    let mut peaks: Vec<(usize, f64)> = (1..mag.len())
        .filter(|&i| mag[i] >= mag[i - 1] && mag.get(i + 1).is_none_or(|&next| mag[i] > next))
        .map(|i| (i, mag[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top = peaks.first().map_or(0.0, |p| p.1);
    peaks
        .into_iter()
        .filter(|p| p.1 >= PEAK_FLOOR * top)
        .take(MAX_PEAKS)
        .map(|(i, _)| 2.0 * std::f64::consts::PI * i as f64 / (len as f64 * dt))
        .collect()
}

/// Coupling guesses consistent with the observed frequencies.
fn coupling_seeds(peaks: &[f64], n_ions: usize) -> Vec<Vec<f64>> {
    if n_ions == 2 {
        return peaks.iter().map(|f| vec![f / 2.0]).collect();
    }
    // Components of the N = 3 signal sit at 4a, 2(a + b) and 2|a − b|.
    let mut seeds = Vec::new();
    for (p, &fp) in peaks.iter().enumerate() {
        let a = fp / 4.0;
        seeds.push(vec![a, a / 8.0]);
        seeds.push(vec![a, 0.0]);
        for (q, &fq) in peaks.iter().enumerate() {
            if p == q {
                continue;
            }
            seeds.push(vec![a, fq / 2.0 - a]);
            seeds.push(vec![a, a + fq / 2.0]);
            seeds.push(vec![a, a - fq / 2.0]);
            seeds.push(vec![(fp + fq) / 4.0, (fp - fq) / 4.0]);
        }
    }
    for s in &mut seeds {
        for v in s.iter_mut() {
            *v = v.abs();
        }
    }
    seeds
}

fn secular_p0(n_ions: usize, js: &[f64], x: f64) -> f64 {
    match n_ions {
        2 => (js[0] * x).cos().powi(2),
        _ => {
            let ca = (2.0 * js[0] * x).cos();
            0.25 * (ca * ca + 1.0 + 2.0 * ca * (2.0 * js[1] * x).cos())
        }
    }
}

fn time_average(n_ions: usize) -> f64 {
    if n_ions == 2 {
        0.5
    } else {
        0.375
    }
}

struct SecularModel<'a> {
    n_ions: usize,
    x: &'a [f64],
    y: &'a [f64],
    params: DVector<f64>,
}

impl SecularModel<'_> {
    fn model(&self, p: &[f64], x: f64) -> f64 {
        let k = self.n_ions - 1;
        let avg = time_average(self.n_ions);
        let decay = (-p[k] * p[k] * x).exp();
        avg + decay * (secular_p0(self.n_ions, &p[..k], x) - avg)
    }

    fn residual_vec(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(self.y)
                .map(|(&x, &y)| self.model(p, x) - y),
        )
    }

    fn cost(&self) -> f64 {
        0.5 * self.residual_vec(self.params.as_slice()).norm_squared()
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for SecularModel<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, p: &DVector<f64>) {
        self.params.copy_from(p);
    }

    fn params(&self) -> DVector<f64> {
        self.params.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = self.residual_vec(self.params.as_slice());
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let np = self.params.len();
        let mut jac = DMatrix::zeros(self.x.len(), np);
        let mut p = self.params.as_slice().to_vec();
        for c in 0..np {
            let h = 1e-7 * p[c].abs().max(1.0);
            let orig = p[c];
            p[c] = orig + h;
            let hi = self.residual_vec(&p);
            p[c] = orig - h;
            let lo = self.residual_vec(&p);
            p[c] = orig;
            jac.set_column(c, &((hi - lo) / (2.0 * h)));
        }
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, stop: f64) -> Vec<f64> {
        (0..n).map(|k| stop * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn two_ion_secular_series() {
        let j = 2.0 * PI * 1.3e3;
        let taus = grid(400, 2e-3);
        let y: Vec<f64> = taus.iter().map(|&t| (j * t).cos().powi(2)).collect();
        let fit = extract_j_from_timeseries(&taus, &y, 2).unwrap();
        assert!((fit.couplings[0] / j - 1.0).abs() < 1e-6, "{fit:?}");
        assert!(fit.decay_rate < 1e-3);
        assert!((fit.predict(taus[77]) - y[77]).abs() < 1e-9);
    }

    #[test]
    fn decay_is_recovered() {
        let (j, gamma) = (2.0 * PI * 2.0e3, 800.0);
        let taus = grid(500, 3e-3);
        let y: Vec<f64> = taus
            .iter()
            .map(|&t| 0.5 + (-gamma * t).exp() * ((j * t).cos().powi(2) - 0.5))
            .collect();
        let fit = extract_j_from_timeseries(&taus, &y, 2).unwrap();
        assert!((fit.couplings[0] / j - 1.0).abs() < 1e-6);
        assert!((fit.decay_rate / gamma - 1.0).abs() < 1e-4, "{fit:?}");
    }

    #[test]
    fn three_ion_two_frequency_series() {
        let (a, b) = (2.0 * PI * 1.1e3, 2.0 * PI * 0.35e3);
        let taus = grid(600, 3e-3);
        let y: Vec<f64> = taus.iter().map(|&t| secular_p0(3, &[a, b], t)).collect();
        let fit = extract_j_from_timeseries(&taus, &y, 3).unwrap();
        assert!((fit.couplings[0] / a - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.couplings[1] / b - 1.0).abs() < 1e-6, "{fit:?}");
    }

    #[test]
    fn flat_signal_rejected() {
        let taus = grid(50, 1e-3);
        assert!(matches!(
            extract_j_from_timeseries(&taus, &[1.0; 50], 2),
            Err(Error::FlatSignal { .. })
        ));
    }

    #[test]
    fn undersampled_series_rejected() {
        // 2J sits at 95% of the sampling Nyquist frequency.
        let taus = grid(64, 1e-3);
        let nyquist = PI / (taus[1] - taus[0]);
        let j = 0.95 * nyquist / 2.0;
        let y: Vec<f64> = taus.iter().map(|&t| (j * t).cos().powi(2)).collect();
        assert!(matches!(
            extract_j_from_timeseries(&taus, &y, 2),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn malformed_inputs() {
        let taus = grid(20, 1e-3);
        let y = vec![0.5; 20];
        assert!(extract_j_from_timeseries(&taus, &y, 4).is_err());
        assert!(extract_j_from_timeseries(&taus, &y[..19], 2).is_err());
        assert!(extract_j_from_timeseries(&taus[..4], &y[..4], 2).is_err());
        let mut back = taus.clone();
        back.swap(3, 4);
        assert!(extract_j_from_timeseries(&back, &y, 2).is_err());
    }
}
