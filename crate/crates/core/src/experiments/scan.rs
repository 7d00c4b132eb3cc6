use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::crystal::IonCrystal;
use crate::error::{Error, Result};
use crate::spinmotion::{evolve, ising_from_parts, Drive, MotionalState, SpinDensity};

/// Detuning scans skip |μ − ω_m| below this, rad/s.
pub const SCAN_GUARD_BAND: f64 = 2.0 * PI * 2.0e3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            unit: unit.into(),
            values,
        }
    }
}

/// An independent-variable grid and one or more output columns over it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanResult {
    pub grid: Column,
    pub outputs: Vec<Column>,
}

impl ScanResult {
    /// Checks that the grid is strictly monotonic and every value is finite.
    pub fn new(grid: Column, outputs: Vec<Column>) -> Result<Self> {
        if grid.values.is_empty() {
            return Err(Error::InvalidArgument("empty scan grid".into()));
        }
        let v = &grid.values;
        let increasing = v.windows(2).all(|w| w[1] > w[0]);
        let decreasing = v.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::InvalidArgument(format!(
                "grid '{}' is not strictly monotonic",
                grid.name
            )));
        }
        for col in std::iter::once(&grid).chain(&outputs) {
            if col.values.len() != v.len() {
                return Err(Error::DimensionMismatch {
                    what: "scan column length",
                    expected: v.len(),
                    found: col.values.len(),
                });
            }
            if let Some(bad) = col.values.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite value {bad} in column '{}'",
                    col.name
                )));
            }
        }
        Ok(ScanResult { grid, outputs })
    }

    pub fn len(&self) -> usize {
        self.grid.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.values.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        std::iter::once(&self.grid)
            .chain(&self.outputs)
            .find(|c| c.name == name)
    }

    /// Grid first, then outputs.
    pub fn columns(&self) -> impl Iterator<Item = &Column> {
        std::iter::once(&self.grid).chain(&self.outputs)
    }
}

/// P_0…P_N after each duration in `taus`, starting from all spins down.
pub fn time_scan(
    crystal: &IonCrystal,
    drive: &Drive,
    taus: &[f64],
    motion: &MotionalState,
) -> Result<ScanResult> {
    drive.check_against(crystal)?;
    motion.check_against(crystal)?;
    let n = crystal.n_ions();
    let initial = SpinDensity::all_down(n)?;
    let rows: Vec<Vec<f64>> = taus
        .par_iter()
        .map(|&tau| {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::InvalidArgument(format!("invalid duration {tau}")));
            }
            Ok(evolve(crystal, &drive.with_duration(tau), motion, &initial)?.populations)
        })
        .collect::<Result<_>>()?;
    let outputs = (0..=n)
        .map(|k| Column::new(format!("P_{k}"), "1", rows.iter().map(|r| r[k]).collect()))
        .collect();
    ScanResult::new(Column::new("tau", "s", taus.to_vec()), outputs)
}

/// J_{i,j}(μ) over `mus`, dropping points within `guard` of any mode.
pub fn detuning_scan_j(
    crystal: &IonCrystal,
    rabi: &[f64],
    mus: &[f64],
    guard: f64,
) -> Result<ScanResult> {
    let n = crystal.n_ions();
    if rabi.len() != n {
        return Err(Error::DimensionMismatch {
            what: "Rabi frequencies",
            expected: n,
            found: rabi.len(),
        });
    }
    if !(guard.is_finite() && guard >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid guard band {guard}"
        )));
    }
    let kept: Vec<f64> = mus
        .iter()
        .copied()
        .filter(|&mu| {
            crystal
                .mode_frequencies
                .iter()
                .all(|w| (mu - w).abs() >= guard)
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument(
            "every detuning lies inside a mode guard band".into(),
        ));
    }
    let mats = kept
        .par_iter()
        .map(|&mu| ising_from_parts(crystal, mu, rabi))
        .collect::<Result<Vec<_>>>()?;
    let mut outputs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            outputs.push(Column::new(
                format!("J_{}_{}", i + 1, j + 1),
                "rad/s",
                mats.iter().map(|m| m.get(i, j)).collect(),
            ));
        }
    }
    ScanResult::new(Column::new("mu", "rad/s", kept), outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::angular;
    use crate::crystal::{build_crystal, TrapConfig};

    fn crystal(n: usize) -> IonCrystal {
        let trap = if n == 2 {
            TrapConfig::from_hz(2, 0.616e6, 3.5838e6)
        } else {
            TrapConfig::from_hz(3, 1.484e6, 3.952e6)
        };
        build_crystal(&trap.unwrap().with_mass_amu(171.0)).unwrap()
    }

    #[test]
    fn grid_validation() {
        let g = |v: Vec<f64>| Column::new("x", "1", v);
        assert!(ScanResult::new(g(vec![]), vec![]).is_err());
        assert!(ScanResult::new(g(vec![0.0, 1.0, 1.0]), vec![]).is_err());
        assert!(ScanResult::new(g(vec![2.0, 1.0]), vec![]).is_ok());
        assert!(ScanResult::new(g(vec![0.0, 1.0]), vec![g(vec![0.0])]).is_err());
        assert!(ScanResult::new(g(vec![0.0, 1.0]), vec![g(vec![0.0, f64::NAN])]).is_err());
    }

    #[test]
    fn time_scan_starts_in_ground_state() {
        let c = crystal(2);
        let d = Drive::uniform(angular(3.557e6), 2e5, 2, 0.0).unwrap();
        let s = time_scan(&c, &d, &[0.0, 1e-5, 2e-5], &MotionalState::ground(2)).unwrap();
        assert_eq!(s.outputs.len(), 3);
        assert!((s.column("P_0").unwrap().values[0] - 1.0).abs() < 1e-14);
        for k in 0..3 {
            let total: f64 = s.outputs.iter().map(|c| c.values[k]).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn guard_band_points_are_dropped() {
        let c = crystal(3);
        let w = c.mode_frequencies.clone();
        let mus = vec![
            w[2] - angular(50e3),
            w[1] + angular(1e3),
            w[0] + angular(50e3),
        ];
        let s = detuning_scan_j(&c, &[1e6; 3], &mus, SCAN_GUARD_BAND).unwrap();
        assert_eq!(s.grid.values, vec![mus[0], mus[2]]);
        assert_eq!(s.outputs.len(), 3);
        assert!(detuning_scan_j(&c, &[1e6; 3], &mus[1..2], SCAN_GUARD_BAND).is_err());
    }

    #[test]
    fn coupling_sign_flips_across_isolated_cm_mode() {
        let c = crystal(2);
        let w = c.mode_frequencies[0];
        let edge = SCAN_GUARD_BAND * 1.01;
        let s = detuning_scan_j(&c, &[3e5; 2], &[w - edge, w + edge], SCAN_GUARD_BAND).unwrap();
        let j = &s.outputs[0].values;
        assert!(j[0] * j[1] < 0.0, "{j:?}");
    }

    #[test]
    fn far_red_and_far_blue_signs() {
        // Weak axial trap so both sides reach the far-detuned limit.
        let c = build_crystal(&TrapConfig::from_hz(3, 0.2e6, 5.0e6).unwrap()).unwrap();
        let w = &c.mode_frequencies;
        let mus = [w[2] - angular(1e6), w[0] + angular(1e6)];
        let s = detuning_scan_j(&c, &[1e6; 3], &mus, SCAN_GUARD_BAND).unwrap();
        let red: Vec<f64> = s.outputs.iter().map(|c| c.values[0]).collect();
        let blue: Vec<f64> = s.outputs.iter().map(|c| c.values[1]).collect();
        assert!(
            red.iter().all(|&x| x > 0.0) || red.iter().all(|&x| x < 0.0),
            "{red:?}"
        );
        // J flips across every mode, so the two far limits agree in sign.
        assert!(blue.iter().all(|&x| x * red[0] > 0.0), "{blue:?}");
    }
}
