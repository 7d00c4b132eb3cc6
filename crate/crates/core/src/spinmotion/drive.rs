use serde::Serialize;

use crate::constants::RESONANCE_GUARD;
use crate::crystal::IonCrystal;
use crate::error::{Error, Result};

/// Bichromatic spin-dependent force with beatnotes at ω₀ ± μ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Drive {
    /// Beatnote detuning μ, rad/s.
    pub mu: f64,
    /// Per-ion carrier Rabi frequencies Ω_i, rad/s.
    pub rabi: Vec<f64>,
    /// Duration τ, s.
    pub duration: f64,
}

impl Drive {
    pub fn new(mu: f64, rabi: Vec<f64>, duration: f64) -> Result<Self> {
        let drive = Drive { mu, rabi, duration };
        drive.validate()?;
        Ok(drive)
    }

    /// Uniform illumination of `n_ions` ions.
    pub fn uniform(mu: f64, rabi: f64, n_ions: usize, duration: f64) -> Result<Self> {
        Self::new(mu, vec![rabi; n_ions], duration)
    }

    pub fn with_duration(&self, duration: f64) -> Self {
        Drive {
            duration,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "detuning mu must be positive, got {}",
                self.mu
            )));
        }
        if let Some(r) = self.rabi.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "Rabi frequencies must be non-negative, got {r}"
            )));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "duration must be non-negative, got {}",
                self.duration
            )));
        }
        Ok(())
    }

    /// Checks ion count and that μ stays out of every mode's guard band.
    pub fn check_against(&self, crystal: &IonCrystal) -> Result<()> {
        self.validate()?;
        if self.rabi.len() != crystal.n_ions() {
            return Err(Error::DimensionMismatch {
                what: "Rabi frequencies",
                expected: crystal.n_ions(),
                found: self.rabi.len(),
            });
        }
        check_off_resonant(self.mu, &crystal.mode_frequencies)
    }
}

pub(crate) fn check_off_resonant(mu: f64, modes: &[f64]) -> Result<()> {
    for (m, &w) in modes.iter().enumerate() {
        if (mu - w).abs() < RESONANCE_GUARD {
            return Err(Error::Resonance {
                mode: m,
                detuning: mu - w,
            });
        }
    }
    Ok(())
}

/// Thermal occupation n̄_m of each transverse mode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MotionalState {
    pub nbar: Vec<f64>,
}

impl MotionalState {
    pub fn ground(n_modes: usize) -> Self {
        MotionalState {
            nbar: vec![0.0; n_modes],
        }
    }

    pub fn thermal(nbar: Vec<f64>) -> Result<Self> {
        if let Some(n) = nbar.iter().find(|n| !(n.is_finite() && **n >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "mean occupation must be non-negative, got {n}"
            )));
        }
        Ok(MotionalState { nbar })
    }

    pub fn check_against(&self, crystal: &IonCrystal) -> Result<()> {
        if self.nbar.len() != crystal.n_modes() {
            return Err(Error::DimensionMismatch {
                what: "thermal occupations",
                expected: crystal.n_modes(),
                found: self.nbar.len(),
            });
        }
        Ok(())
    }
}
