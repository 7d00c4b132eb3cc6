//! Gate calibration, scans and fits built on the closed-form dynamics.

mod fit;
mod gate;
mod scan;

pub use fit::{extract_j_from_timeseries, JFit};
pub use gate::{
    calibrate_gate, ghz_fidelity, ghz_prepare, parity_experiment, DetuningRule, GateCalibration,
    GateSpec, GhzPreparation, ParityResult,
};
pub use scan::{detuning_scan_j, time_scan, Column, ScanResult, SCAN_GUARD_BAND};
