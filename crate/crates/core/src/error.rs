use thiserror::Error;

use crate::cli::config::ConfigError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "equilibrium solve did not converge after {iterations} iterations (residual {residual:e})"
    )]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("linear chain unstable: transverse mode {mode} has eigenvalue {eigenvalue:e}")]
    ZigzagInstability { mode: usize, eigenvalue: f64 },

    #[error("drive is resonant with mode {mode} (mu - omega_m = {detuning:e} rad/s)")]
    Resonance { mode: usize, detuning: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("Hilbert space of {required} amplitudes exceeds the cap of {cap}")]
    DimensionCap { required: usize, cap: usize },

    #[error("norm drift {drift:e} exceeds tolerance; reduce the integrator step")]
    NormDrift { drift: f64 },

    #[error("gate calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("signal is flat (standard deviation {std_dev:e}); nothing to fit")]
    FlatSignal { std_dev: f64 },

    #[error("frequency {frequency:e} rad/s exceeds the sampling Nyquist limit {nyquist:e} rad/s")]
    Aliasing { frequency: f64, nyquist: f64 },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SolverFailure { .. } => "solver_failure",
            Error::ZigzagInstability { .. } => "zigzag_instability",
            Error::Resonance { .. } => "resonance",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DimensionCap { .. } => "dimension_cap",
            Error::NormDrift { .. } => "norm_drift",
            Error::CalibrationFailure(_) => "calibration_failure",
            Error::FitFailure(_) => "fit_failure",
            Error::FlatSignal { .. } => "flat_signal",
            Error::Aliasing { .. } => "aliasing",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
