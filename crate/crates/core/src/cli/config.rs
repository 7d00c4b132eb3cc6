//! Sectioned `key = value` run configuration.
//!
//! Frequencies are cyclic (Hz), times in seconds, lengths in meters.
//! Values keep their configured units here; the accessors convert to
//! rad/s for everything downstream.

use std::fmt::Write as _;

use thiserror::Error;

use crate::constants::{
    angular, DEFAULT_RAMAN_WAVELENGTH, DEFAULT_WAVEVECTOR_FACTOR, YB171_MASS_AMU,
};
use crate::crystal::{IonCrystal, TrapConfig};
use crate::experiments::{DetuningRule, GateSpec, SCAN_GUARD_BAND};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },

    #[error("line {line}: section [{name}] appears twice")]
    DuplicateSection { line: usize, name: String },

    #[error("line {line}: unknown key '{key}' in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },

    #[error("line {line}: key '{key}' appears twice")]
    DuplicateKey { line: usize, key: String },

    #[error("missing section [{0}]")]
    MissingSection(&'static str),

    #[error("missing key '{key}' in [{section}]")]
    MissingKey {
        section: &'static str,
        key: &'static str,
    },

    #[error("line {line}: invalid value for '{key}': {message}")]
    InvalidValue {
        line: usize,
        key: String,
        message: String,
    },

    #[error("{0}")]
    Inconsistent(String),
}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentName {
    Modes,
    Gate,
    TimeScan,
    DetuningScan,
    ExtractJ,
    OracleCheck,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        ExperimentName::Modes,
        ExperimentName::Gate,
        ExperimentName::TimeScan,
        ExperimentName::DetuningScan,
        ExperimentName::ExtractJ,
        ExperimentName::OracleCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Modes => "modes",
            ExperimentName::Gate => "gate",
            ExperimentName::TimeScan => "time_scan",
            ExperimentName::DetuningScan => "detuning_scan",
            ExperimentName::ExtractJ => "extract_j",
            ExperimentName::OracleCheck => "oracle_check",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrapSection {
    pub ions: usize,
    pub axial_hz: f64,
    pub transverse_hz: f64,
    pub mass_amu: Option<f64>,
    pub wavelength_m: Option<f64>,
    pub wavevector_factor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DetuningSetting {
    /// Midway between two modes, 1-based; the first is the gate reference.
    Bisect(usize, usize),
    /// Offset in Hz from a 1-based mode; positive is blue.
    Offset { mode: usize, hz: f64 },
    /// μ/2π in Hz.
    Absolute(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum RabiSetting {
    Calibrate,
    /// Ω/2π in Hz, one value for uniform illumination or one per ion.
    Hz(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DurationSetting {
    Gate,
    Seconds(f64),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DriveSection {
    pub detuning: Option<DetuningSetting>,
    pub rabi: Option<RabiSetting>,
    pub duration: Option<DurationSetting>,
    pub target_chi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSection {
    pub name: ExperimentName,
    pub nbar: Option<Vec<f64>>,
    pub tau_stop_s: Option<f64>,
    pub tau_points: Option<usize>,
    pub phase_points: Option<usize>,
    pub mu_start_hz: Option<f64>,
    pub mu_stop_hz: Option<f64>,
    pub mu_points: Option<usize>,
    pub guard_hz: Option<f64>,
    pub input_csv: Option<String>,
    pub n_max: Option<usize>,
}

impl ExperimentSection {
    fn new(name: ExperimentName) -> Self {
        ExperimentSection {
            name,
            nbar: None,
            tau_stop_s: None,
            tau_points: None,
            phase_points: None,
            mu_start_hz: None,
            mu_stop_hz: None,
            mu_points: None,
            guard_hz: None,
            input_csv: None,
            n_max: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub trap: TrapSection,
    pub drive: Option<DriveSection>,
    pub experiment: ExperimentSection,
    pub output_dir: Option<String>,
}

const TRAP_KEYS: [&str; 6] = [
    "ions",
    "axial_hz",
    "transverse_hz",
    "mass_amu",
    "wavelength_m",
    "wavevector_factor",
];
const DRIVE_KEYS: [&str; 4] = ["detuning", "rabi", "duration", "target_chi"];
const EXPERIMENT_KEYS: [&str; 11] = [
    "name",
    "nbar",
    "tau_stop_s",
    "tau_points",
    "phase_points",
    "mu_start_hz",
    "mu_stop_hz",
    "mu_points",
    "guard_hz",
    "input_csv",
    "n_max",
];
const OUTPUT_KEYS: [&str; 1] = ["dir"];

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    entries: Vec<Entry>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn require(&self, section: &'static str, key: &'static str) -> CResult<&Entry> {
        self.get(key)
            .ok_or(ConfigError::MissingKey { section, key })
    }
}

fn invalid(e: &Entry, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        line: e.line,
        key: e.key.clone(),
        message: message.into(),
    }
}

fn float(e: &Entry) -> CResult<f64> {
    let v: f64 = e
        .value
        .parse()
        .map_err(|_| invalid(e, format!("'{}' is not a number", e.value)))?;
    if !v.is_finite() {
        return Err(invalid(e, "must be finite"));
    }
    Ok(v)
}

fn positive(e: &Entry) -> CResult<f64> {
    let v = float(e)?;
    if v <= 0.0 {
        return Err(invalid(e, format!("must be positive, got {v}")));
    }
    Ok(v)
}

fn non_negative(e: &Entry) -> CResult<f64> {
    let v = float(e)?;
    if v < 0.0 {
        return Err(invalid(e, format!("must be non-negative, got {v}")));
    }
    Ok(v)
}

fn count(e: &Entry, min: usize) -> CResult<usize> {
    let v: usize = e
        .value
        .parse()
        .map_err(|_| invalid(e, format!("'{}' is not a non-negative integer", e.value)))?;
    if v < min {
        return Err(invalid(e, format!("must be at least {min}, got {v}")));
    }
    Ok(v)
}

fn float_list(e: &Entry, check: fn(&Entry) -> CResult<f64>) -> CResult<Vec<f64>> {
    let items: Vec<&str> = e.value.split_whitespace().collect();
    if items.is_empty() {
        return Err(invalid(e, "empty list"));
    }
    items
        .into_iter()
        .map(|s| {
            check(&Entry {
                key: e.key.clone(),
                value: s.to_string(),
                line: e.line,
            })
        })
        .collect()
}

/// Parses configuration text. Blank lines and lines starting with `#` are
/// ignored.
pub fn parse_config(text: &str) -> CResult<RunConfig> {
    let mut sections: Vec<(String, Section)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("unterminated section header '{s}'"),
            })?;
            let name = name.trim().to_string();
            if !["trap", "drive", "experiment", "output"].contains(&name.as_str()) {
                return Err(ConfigError::UnknownSection { line, name });
            }
            if sections.iter().any(|(n, _)| *n == name) {
                return Err(ConfigError::DuplicateSection { line, name });
            }
            sections.push((
                name,
                Section {
                    entries: Vec::new(),
                },
            ));
            continue;
        }
        let (key, value) = s.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected 'key = value', found '{s}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        let (name, section) = sections.last_mut().ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("key '{key}' appears before any section"),
        })?;
        let allowed: &[&str] = match name.as_str() {
            "trap" => &TRAP_KEYS,
            "drive" => &DRIVE_KEYS,
            "experiment" => &EXPERIMENT_KEYS,
            _ => &OUTPUT_KEYS,
        };
        if !allowed.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                section: name.clone(),
                key: key.to_string(),
            });
        }
        if section.get(key).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key '{key}' has no value"),
            });
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }

    let find = |name: &str| sections.iter().find(|(n, _)| n == name).map(|(_, s)| s);
    let trap = parse_trap(find("trap").ok_or(ConfigError::MissingSection("trap"))?)?;
    let drive = find("drive")
        .map(|s| parse_drive(s, trap.ions))
        .transpose()?;
    let experiment =
        parse_experiment(find("experiment").ok_or(ConfigError::MissingSection("experiment"))?)?;
    let output_dir = match find("output") {
        Some(s) => Some(s.require("output", "dir")?.value.clone()),
        None => None,
    };
    Ok(RunConfig {
        trap,
        drive,
        experiment,
        output_dir,
    })
}

fn parse_trap(s: &Section) -> CResult<TrapSection> {
    let ions_entry = s.require("trap", "ions")?;
    let ions = count(ions_entry, 1)?;
    if ions > crate::spinmotion::MAX_SPINS {
        return Err(invalid(
            ions_entry,
            format!(
                "at most {} ions are supported",
                crate::spinmotion::MAX_SPINS
            ),
        ));
    }
    Ok(TrapSection {
        ions,
        axial_hz: positive(s.require("trap", "axial_hz")?)?,
        transverse_hz: positive(s.require("trap", "transverse_hz")?)?,
        mass_amu: s.get("mass_amu").map(positive).transpose()?,
        wavelength_m: s.get("wavelength_m").map(positive).transpose()?,
        wavevector_factor: s.get("wavevector_factor").map(positive).transpose()?,
    })
}

fn mode_index(e: &Entry, token: &str, ions: usize) -> CResult<usize> {
    let m: usize = token
        .parse()
        .map_err(|_| invalid(e, format!("'{token}' is not a mode number")))?;
    if m == 0 || m > ions {
        return Err(invalid(e, format!("mode {m} out of range 1..={ions}")));
    }
    Ok(m)
}

fn parse_drive(s: &Section, ions: usize) -> CResult<DriveSection> {
    let detuning = s
        .get("detuning")
        .map(|e| {
            let tokens: Vec<&str> = e.value.split_whitespace().collect();
            match tokens.as_slice() {
                ["bisect", a, b] => {
                    let (a, b) = (mode_index(e, a, ions)?, mode_index(e, b, ions)?);
                    if a == b {
                        return Err(invalid(e, "bisect needs two distinct modes"));
                    }
                    Ok(DetuningSetting::Bisect(a, b))
                }
                ["offset", m, hz] => {
                    let mode = mode_index(e, m, ions)?;
                    let hz = float(&Entry {
                        key: e.key.clone(),
                        value: hz.to_string(),
                        line: e.line,
                    })?;
                    Ok(DetuningSetting::Offset { mode, hz })
                }
                [_] => Ok(DetuningSetting::Absolute(positive(e)?)),
                _ => Err(invalid(
                    e,
                    "expected 'bisect A B', 'offset MODE HZ' or a frequency in Hz",
                )),
            }
        })
        .transpose()?;
    let rabi = s
        .get("rabi")
        .map(|e| {
            if e.value == "calibrate" {
                return Ok(RabiSetting::Calibrate);
            }
            let v = float_list(e, non_negative)?;
            if v.len() != 1 && v.len() != ions {
                return Err(invalid(
                    e,
                    format!("expected 1 or {ions} Rabi frequencies, got {}", v.len()),
                ));
            }
            Ok(RabiSetting::Hz(v))
        })
        .transpose()?;
    let duration = s
        .get("duration")
        .map(|e| {
            if e.value == "gate" {
                Ok(DurationSetting::Gate)
            } else {
                Ok(DurationSetting::Seconds(positive(e)?))
            }
        })
        .transpose()?;
    Ok(DriveSection {
        detuning,
        rabi,
        duration,
        target_chi: s.get("target_chi").map(non_negative).transpose()?,
    })
}

fn parse_experiment(s: &Section) -> CResult<ExperimentSection> {
    let e = s.require("experiment", "name")?;
    let name = ExperimentName::parse(&e.value).ok_or_else(|| {
        invalid(
            e,
            format!(
                "unknown experiment '{}' (expected one of {})",
                e.value,
                ExperimentName::ALL.map(|x| x.as_str()).join(", ")
            ),
        )
    })?;
    let mut x = ExperimentSection::new(name);
    x.nbar = s
        .get("nbar")
        .map(|e| float_list(e, non_negative))
        .transpose()?;
    x.tau_stop_s = s.get("tau_stop_s").map(positive).transpose()?;
    x.tau_points = s.get("tau_points").map(|e| count(e, 2)).transpose()?;
    x.phase_points = s.get("phase_points").map(|e| count(e, 3)).transpose()?;
    x.mu_start_hz = s.get("mu_start_hz").map(positive).transpose()?;
    x.mu_stop_hz = s.get("mu_stop_hz").map(positive).transpose()?;
    x.mu_points = s.get("mu_points").map(|e| count(e, 1)).transpose()?;
    x.guard_hz = s.get("guard_hz").map(non_negative).transpose()?;
    x.input_csv = s.get("input_csv").map(|e| e.value.clone());
    x.n_max = s.get("n_max").map(|e| count(e, 1)).transpose()?;
    if let (Some(a), Some(b)) = (x.mu_start_hz, x.mu_stop_hz) {
        if a == b && x.mu_points.unwrap_or(1) > 1 {
            return Err(ConfigError::Inconsistent(
                "mu_start_hz equals mu_stop_hz but mu_points > 1".into(),
            ));
        }
    }
    Ok(x)
}

/// Canonical number text: shortest round-trip form, exponent for very
/// small or large magnitudes.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn list(v: &[f64]) -> String {
    v.iter()
        .map(|&x| format_number(x))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canonical text form. `parse_config(serialize_config(c)) == c`.
pub fn serialize_config(c: &RunConfig) -> String {
    let mut s = String::new();
    let kv = |s: &mut String, k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    s.push_str("[trap]\n");
    let t = &c.trap;
    kv(&mut s, "ions", t.ions.to_string());
    kv(&mut s, "axial_hz", format_number(t.axial_hz));
    kv(&mut s, "transverse_hz", format_number(t.transverse_hz));
    if let Some(v) = t.mass_amu {
        kv(&mut s, "mass_amu", format_number(v));
    }
    if let Some(v) = t.wavelength_m {
        kv(&mut s, "wavelength_m", format_number(v));
    }
    if let Some(v) = t.wavevector_factor {
        kv(&mut s, "wavevector_factor", format_number(v));
    }
    if let Some(d) = &c.drive {
        s.push_str("\n[drive]\n");
        if let Some(det) = &d.detuning {
            let v = match det {
                DetuningSetting::Bisect(a, b) => format!("bisect {a} {b}"),
                DetuningSetting::Offset { mode, hz } => {
                    format!("offset {mode} {}", format_number(*hz))
                }
                DetuningSetting::Absolute(hz) => format_number(*hz),
            };
            kv(&mut s, "detuning", v);
        }
        if let Some(r) = &d.rabi {
            let v = match r {
                RabiSetting::Calibrate => "calibrate".to_string(),
                RabiSetting::Hz(v) => list(v),
            };
            kv(&mut s, "rabi", v);
        }
        if let Some(t) = &d.duration {
            let v = match t {
                DurationSetting::Gate => "gate".to_string(),
                DurationSetting::Seconds(x) => format_number(*x),
            };
            kv(&mut s, "duration", v);
        }
        if let Some(v) = d.target_chi {
            kv(&mut s, "target_chi", format_number(v));
        }
    }
    let x = &c.experiment;
    s.push_str("\n[experiment]\n");
    kv(&mut s, "name", x.name.as_str().to_string());
    if let Some(v) = &x.nbar {
        kv(&mut s, "nbar", list(v));
    }
    let floats = [
        ("tau_stop_s", x.tau_stop_s),
        ("mu_start_hz", x.mu_start_hz),
        ("mu_stop_hz", x.mu_stop_hz),
        ("guard_hz", x.guard_hz),
    ];
    let counts = [
        ("tau_points", x.tau_points),
        ("phase_points", x.phase_points),
        ("mu_points", x.mu_points),
        ("n_max", x.n_max),
    ];
    for key in EXPERIMENT_KEYS {
        if let Some((_, Some(v))) = floats.iter().find(|(k, _)| *k == key) {
            kv(&mut s, key, format_number(*v));
        } else if let Some((_, Some(v))) = counts.iter().find(|(k, _)| *k == key) {
            kv(&mut s, key, v.to_string());
        } else if key == "input_csv" {
            if let Some(p) = &x.input_csv {
                kv(&mut s, key, p.clone());
            }
        }
    }
    if let Some(dir) = &c.output_dir {
        s.push_str("\n[output]\ndir = ");
        s.push_str(dir);
        s.push('\n');
    }
    s
}

impl RunConfig {
    pub fn trap_config(&self) -> crate::Result<TrapConfig> {
        let t = &self.trap;
        Ok(TrapConfig::from_hz(t.ions, t.axial_hz, t.transverse_hz)?
            .with_mass_amu(t.mass_amu.unwrap_or(YB171_MASS_AMU))
            .with_wavelength(t.wavelength_m.unwrap_or(DEFAULT_RAMAN_WAVELENGTH))
            .with_wavevector_factor(t.wavevector_factor.unwrap_or(DEFAULT_WAVEVECTOR_FACTOR)))
    }

    pub fn drive_section(&self) -> CResult<&DriveSection> {
        self.drive
            .as_ref()
            .ok_or(ConfigError::MissingSection("drive"))
    }

    /// Gate rule built from a bisect or offset detuning.
    pub fn gate_spec(&self) -> CResult<GateSpec> {
        let d = self.drive_section()?;
        let rule = match d.detuning.as_ref().ok_or(ConfigError::MissingKey {
            section: "drive",
            key: "detuning",
        })? {
            DetuningSetting::Bisect(a, b) => DetuningRule::Bisect {
                reference: a - 1,
                other: b - 1,
            },
            DetuningSetting::Offset { mode, hz } => DetuningRule::Offset {
                mode: mode - 1,
                offset: angular(*hz),
            },
            DetuningSetting::Absolute(_) => {
                return Err(ConfigError::Inconsistent(
                    "a gate rule needs 'detuning = bisect A B' or 'offset MODE HZ'".into(),
                ))
            }
        };
        let mut spec = GateSpec::new(rule);
        if let Some(chi) = d.target_chi {
            spec = spec.with_target(chi);
        }
        if let Some(DurationSetting::Seconds(t)) = d.duration {
            spec = spec.with_duration(t);
        }
        Ok(spec)
    }

    /// μ in rad/s for the given crystal.
    pub fn mu(&self, crystal: &IonCrystal) -> crate::Result<f64> {
        let d = self.drive_section()?;
        match d.detuning.as_ref().ok_or(ConfigError::MissingKey {
            section: "drive",
            key: "detuning",
        })? {
            DetuningSetting::Absolute(hz) => Ok(angular(*hz)),
            _ => Ok(self.gate_spec()?.detuning.resolve(crystal)?.0),
        }
    }

    /// Explicit Ω per ion in rad/s, or `None` for `calibrate`.
    pub fn rabi(&self) -> CResult<Option<Vec<f64>>> {
        let d = self.drive_section()?;
        match d.rabi.as_ref().ok_or(ConfigError::MissingKey {
            section: "drive",
            key: "rabi",
        })? {
            RabiSetting::Calibrate => Ok(None),
            RabiSetting::Hz(v) => {
                let n = self.trap.ions;
                let v: Vec<f64> = v.iter().map(|&x| angular(x)).collect();
                Ok(Some(if v.len() == 1 { vec![v[0]; n] } else { v }))
            }
        }
    }

    /// Beatnote grid in rad/s from `mu_start_hz`, `mu_stop_hz`, `mu_points`.
    pub fn mu_grid(&self) -> CResult<Vec<f64>> {
        let x = &self.experiment;
        let missing = |key| ConfigError::MissingKey {
            section: "experiment",
            key,
        };
        let a = x.mu_start_hz.ok_or(missing("mu_start_hz"))?;
        let b = x.mu_stop_hz.ok_or(missing("mu_stop_hz"))?;
        let n = x.mu_points.ok_or(missing("mu_points"))?;
        Ok(linspace(angular(a), angular(b), n))
    }

    /// Guard band around each mode in rad/s.
    pub fn guard(&self) -> f64 {
        self.experiment.guard_hz.map_or(SCAN_GUARD_BAND, angular)
    }

    pub fn nbar(&self, n_modes: usize) -> CResult<Vec<f64>> {
        match &self.experiment.nbar {
            None => Ok(vec![0.0; n_modes]),
            Some(v) if v.len() == 1 => Ok(vec![v[0]; n_modes]),
            Some(v) if v.len() == n_modes => Ok(v.clone()),
            Some(v) => Err(ConfigError::Inconsistent(format!(
                "nbar lists {} values for {n_modes} modes",
                v.len()
            ))),
        }
    }
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}
