use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::{json, Value};

use super::config::{
    linspace, serialize_config, ConfigError, DurationSetting, ExperimentName, RunConfig,
};
use super::output::{emit_csv, read_csv, write_json};
use crate::crystal::{build_crystal, IonCrystal};
use crate::error::{Error, Result};
use crate::experiments::{
    calibrate_gate, detuning_scan_j, extract_j_from_timeseries, ghz_prepare, parity_experiment,
    time_scan, Column, GateCalibration, ScanResult,
};
use crate::oracle::{integrate_hamiltonian, magnus_chi, FockSpec};
use crate::spinmotion::{chi_coupling_with, evolve, ChiFormula, Drive, MotionalState, SpinDensity};

const DEFAULT_TAU_POINTS: usize = 201;
const DEFAULT_PHASE_POINTS: usize = 64;
const DEFAULT_ORACLE_POINTS: usize = 11;
const DEFAULT_N_MAX: usize = 25;

/// Files written and the scalars reported by one run.
#[derive(Debug)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: BTreeMap<String, f64>,
}

struct Artifacts {
    summary: BTreeMap<String, f64>,
    details: serde_json::Map<String, Value>,
    counters: BTreeMap<String, u64>,
    tables: Vec<(String, ScanResult)>,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts {
            summary: BTreeMap::new(),
            details: serde_json::Map::new(),
            counters: BTreeMap::new(),
            tables: Vec::new(),
        }
    }

    fn scalar(&mut self, key: impl Into<String>, v: f64) {
        self.summary.insert(key.into(), v);
    }

    fn count(&mut self, key: &str, v: usize) {
        self.counters.insert(key.to_string(), v as u64);
    }
}

/// Sizes the global scan pool from `IONSIM_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("IONSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "IONSIM_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Runs `command` on `config`. Relative paths inside the config resolve
/// against `config_dir`.
pub fn run(
    command: ExperimentName,
    config: &RunConfig,
    config_dir: &Path,
    out_dir: &Path,
) -> Result<RunOutput> {
    if command != ExperimentName::Modes && command != config.experiment.name {
        return Err(ConfigError::Inconsistent(format!(
            "config describes experiment '{}' but the '{}' command was requested",
            config.experiment.name.as_str(),
            command.as_str()
        ))
        .into());
    }
    let crystal = build_crystal(&config.trap_config()?)?;
    let art = match command {
        ExperimentName::Modes => modes(&crystal)?,
        ExperimentName::Gate => gate(config, &crystal)?,
        ExperimentName::TimeScan => scan_time(config, &crystal)?,
        ExperimentName::DetuningScan => scan_detuning(config, &crystal)?,
        ExperimentName::ExtractJ => extract_j(config, &crystal, config_dir)?,
        ExperimentName::OracleCheck => oracle_check(config, &crystal)?,
    };

    fs::create_dir_all(out_dir)?;
    let stem = command.as_str();
    let mut files = Vec::new();
    for (suffix, table) in &art.tables {
        let path = out_dir.join(format!("{stem}{suffix}.csv"));
        emit_csv(table, &path)?;
        files.push(path);
    }
    let mut results = serde_json::Map::new();
    results.insert("summary".into(), json!(art.summary));
    results.extend(art.details);
    let doc = json!({
        "config_echo": serialize_config(config),
        "crystal": crystal,
        "results": results,
        "timings": art.counters,
    });
    let path = out_dir.join(format!("{stem}.json"));
    write_json(&path, &doc)?;
    files.push(path);
    Ok(RunOutput {
        files,
        summary: art.summary,
    })
}

fn modes(crystal: &IonCrystal) -> Result<Artifacts> {
    let mut art = Artifacts::new();
    let n = crystal.n_ions();
    let m = crystal.n_modes();
    let index: Vec<f64> = (1..=m).map(|k| k as f64).collect();
    let mut cols = vec![Column::new(
        "omega",
        "rad/s",
        crystal.mode_frequencies.clone(),
    )];
    for i in 0..n {
        cols.push(Column::new(
            format!("b_{}", i + 1),
            "1",
            (0..m).map(|k| crystal.mode_matrix[(i, k)]).collect(),
        ));
    }
    for i in 0..n {
        cols.push(Column::new(
            format!("eta_{}", i + 1),
            "1",
            (0..m).map(|k| crystal.lamb_dicke[(i, k)]).collect(),
        ));
    }
    art.tables.push((
        String::new(),
        ScanResult::new(Column::new("mode", "1", index), cols)?,
    ));
    for (k, w) in crystal.mode_frequencies.iter().enumerate() {
        art.scalar(format!("omega_{}_rad_s", k + 1), *w);
    }
    art.count("modes", m);
    Ok(art)
}

/// The configured drive, calibrating Ω when asked. Returns the drive with
/// its duration set and the calibration if one ran.
fn resolve_drive(
    config: &RunConfig,
    crystal: &IonCrystal,
    need_duration: bool,
) -> Result<(Drive, Option<GateCalibration>)> {
    let d = config.drive_section()?;
    match config.rabi()? {
        None => {
            let cal = calibrate_gate(crystal, &config.gate_spec()?)?;
            Ok((cal.drive.clone(), Some(cal)))
        }
        Some(rabi) => {
            let mu = config.mu(crystal)?;
            let duration = match &d.duration {
                Some(DurationSetting::Seconds(t)) => *t,
                Some(DurationSetting::Gate) => {
                    let spec = config.gate_spec()?;
                    let (mu_rule, reference) = spec.detuning.resolve(crystal)?;
                    2.0 * PI / (mu_rule - crystal.mode_frequencies[reference]).abs()
                }
                None if need_duration => {
                    return Err(ConfigError::MissingKey {
                        section: "drive",
                        key: "duration",
                    }
                    .into())
                }
                None => 0.0,
            };
            Ok((Drive::new(mu, rabi, duration)?, None))
        }
    }
}

fn report_drive(art: &mut Artifacts, drive: &Drive, cal: Option<&GateCalibration>) {
    art.scalar("mu_rad_s", drive.mu);
    for (i, r) in drive.rabi.iter().enumerate() {
        art.scalar(format!("rabi_{}_rad_s", i + 1), *r);
    }
    if drive.duration > 0.0 {
        art.scalar("duration_s", drive.duration);
    }
    if let Some(c) = cal {
        art.scalar("gate_time_s", c.gate_time);
        art.scalar("gate_detuning_rad_s", c.detuning);
        art.scalar("eta_rabi_ratio", c.eta_rabi_ratio);
        art.scalar("chi_mean", c.chi_mean);
        art.scalar("chi_spread", c.chi_spread);
        art.scalar("calibration_residual", c.residual);
    }
}

fn motion(config: &RunConfig, crystal: &IonCrystal) -> Result<MotionalState> {
    MotionalState::thermal(config.nbar(crystal.n_modes())?)
}

fn gate(config: &RunConfig, crystal: &IonCrystal) -> Result<Artifacts> {
    let mut art = Artifacts::new();
    let n = crystal.n_ions();
    let (drive, cal) = resolve_drive(config, crystal, true)?;
    let motion = motion(config, crystal)?;
    report_drive(&mut art, &drive, cal.as_ref());

    let x = &config.experiment;
    let stop = x.tau_stop_s.unwrap_or(2.0 * drive.duration);
    let taus = linspace(0.0, stop, x.tau_points.unwrap_or(DEFAULT_TAU_POINTS));
    art.tables.push((
        "_populations".into(),
        time_scan(crystal, &drive, &taus, &motion)?,
    ));

    let out = evolve(crystal, &drive, &motion, &SpinDensity::all_down(n)?)?;
    for (k, p) in out.populations.iter().enumerate() {
        art.scalar(format!("gate_P_{k}"), *p);
    }
    let max_alpha = out.alpha.iter().map(|a| a.norm()).fold(0.0, f64::max);
    art.scalar("max_residual_alpha", max_alpha);

    let phases = linspace(
        0.0,
        2.0 * PI,
        x.phase_points.unwrap_or(DEFAULT_PHASE_POINTS) + 1,
    );
    let phases = &phases[..phases.len() - 1];
    let analysed = if n == 2 {
        // (|↓↓⟩ + i·sgn χ |↑↑⟩)/√2
        let s = out.chi[(0, 1)].signum();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let target = [
            Complex64::from(r),
            Complex64::from(0.0),
            Complex64::from(0.0),
            Complex64::new(0.0, s * r),
        ];
        art.scalar("bell_fidelity", out.rho_spin.fidelity_with(&target)?);
        out.rho_spin
    } else {
        let ghz = ghz_prepare(crystal, &drive, &motion)?;
        art.scalar("ghz_overlap", ghz.overlap);
        art.scalar("ghz_rotation_phase", ghz.phase);
        art.scalar("ghz_relative_phase", ghz.relative_phase);
        art.scalar("ghz_overlap_fixed_phase", ghz.overlap_fixed_phase);
        ghz.state
    };
    let parity = parity_experiment(&analysed, phases)?;
    art.scalar("parity_contrast", parity.contrast);
    art.scalar("parity_offset", parity.offset);
    art.scalar("p0_plus_pn", parity.p0_plus_pn);
    art.scalar("fidelity_bound", parity.fidelity_bound);
    art.tables.push(("_parity".into(), parity.scan));
    art.details
        .insert("chi".into(), json!(matrix_rows(&out.chi)));
    art.count("time_points", taus.len());
    art.count("phase_points", phases.len());
    Ok(art)
}

fn scan_time(config: &RunConfig, crystal: &IonCrystal) -> Result<Artifacts> {
    let mut art = Artifacts::new();
    let (drive, cal) = resolve_drive(config, crystal, false)?;
    let motion = motion(config, crystal)?;
    report_drive(&mut art, &drive, cal.as_ref());
    let x = &config.experiment;
    let stop = x.tau_stop_s.ok_or(ConfigError::MissingKey {
        section: "experiment",
        key: "tau_stop_s",
    })?;
    let taus = linspace(0.0, stop, x.tau_points.unwrap_or(DEFAULT_TAU_POINTS));
    let scan = time_scan(crystal, &drive, &taus, &motion)?;
    for c in &scan.outputs {
        art.scalar(
            format!("final_{}", c.name),
            *c.values.last().unwrap_or(&f64::NAN),
        );
    }
    art.count("time_points", taus.len());
    art.tables.push((String::new(), scan));
    Ok(art)
}

fn scan_detuning(config: &RunConfig, crystal: &IonCrystal) -> Result<Artifacts> {
    let mut art = Artifacts::new();
    let rabi = config.rabi()?.ok_or_else(|| {
        ConfigError::Inconsistent("a detuning scan needs explicit Rabi frequencies".into())
    })?;
    let mus = config.mu_grid()?;
    let guard = config.guard();
    let scan = detuning_scan_j(crystal, &rabi, &mus, guard)?;
    for (i, r) in rabi.iter().enumerate() {
        art.scalar(format!("rabi_{}_rad_s", i + 1), *r);
    }
    art.scalar("guard_band_rad_s", guard);
    art.count("requested_points", mus.len());
    art.count("kept_points", scan.len());
    art.count("dropped_points", mus.len() - scan.len());
    art.tables.push((String::new(), scan));
    Ok(art)
}

fn extract_j(config: &RunConfig, crystal: &IonCrystal, config_dir: &Path) -> Result<Artifacts> {
    let mut art = Artifacts::new();
    let input = config
        .experiment
        .input_csv
        .as_ref()
        .ok_or(ConfigError::MissingKey {
            section: "experiment",
            key: "input_csv",
        })?;
    let path = config_dir.join(input);
    let cols = read_csv(&path)?;
    let find = |name: &str| {
        cols.iter().find(|c| c.name == name).ok_or_else(|| {
            Error::InvalidArgument(format!("{} has no '{name}' column", path.display()))
        })
    };
    let (taus, p0) = (find("tau")?, find("P_0")?);
    let fit = extract_j_from_timeseries(&taus.values, &p0.values, crystal.n_ions())?;
    let names = ["J_1_2_rad_s", "J_1_3_rad_s"];
    for (name, j) in names.iter().zip(&fit.couplings) {
        art.scalar(*name, *j);
    }
    art.scalar("decay_rate_per_s", fit.decay_rate);
    art.scalar("rms_residual", fit.rms_residual);
    art.count("samples", taus.values.len());
    art.count("fit_starts", fit.starts);
    let model: Vec<f64> = taus.values.iter().map(|&t| fit.predict(t)).collect();
    art.tables.push((
        String::new(),
        ScanResult::new(
            Column::new("tau", "s", taus.values.clone()),
            vec![
                Column::new("P_0", "1", p0.values.clone()),
                Column::new("P_0_fit", "1", model),
            ],
        )?,
    ));
    Ok(art)
}

fn oracle_check(config: &RunConfig, crystal: &IonCrystal) -> Result<Artifacts> {
    let mut art = Artifacts::new();
    let n = crystal.n_ions();
    let (drive, cal) = resolve_drive(config, crystal, true)?;
    let motion = motion(config, crystal)?;
    report_drive(&mut art, &drive, cal.as_ref());
    let x = &config.experiment;
    let n_max = x.n_max.unwrap_or(DEFAULT_N_MAX);
    let times = linspace(
        0.0,
        drive.duration,
        x.tau_points.unwrap_or(DEFAULT_ORACLE_POINTS),
    );

    let closed = time_scan(crystal, &drive, &times, &motion)?;
    let fock = integrate_hamiltonian(
        crystal,
        &drive,
        &FockSpec::new(n_max, motion.nbar.clone()),
        &SpinDensity::all_down(n)?,
        &times,
    )?;
    let mut cols = Vec::new();
    let mut max_diff = 0.0f64;
    for k in 0..=n {
        let c = &closed.outputs[k].values;
        let f: Vec<f64> = fock.populations.iter().map(|p| p[k]).collect();
        for (a, b) in c.iter().zip(&f) {
            max_diff = max_diff.max((a - b).abs());
        }
        cols.push(Column::new(format!("P_{k}_closed"), "1", c.clone()));
        cols.push(Column::new(format!("P_{k}_fock"), "1", f));
    }
    art.scalar("max_population_difference", max_diff);
    art.scalar("norm_drift", fock.norm_drift);

    if n >= 2 && drive.duration > 0.0 {
        let tau = drive.duration;
        let standard = chi_coupling_with(crystal, &drive, 0, 1, tau, ChiFormula::Standard)?;
        let exact = chi_coupling_with(crystal, &drive, 0, 1, tau, ChiFormula::ExactMagnus)?;
        let magnus = magnus_chi(crystal, &drive, 0, 1, tau)?;
        art.scalar("chi_1_2_standard", standard);
        art.scalar("chi_1_2_exact", exact);
        art.scalar("chi_1_2_magnus", magnus);
        if magnus != 0.0 {
            art.scalar(
                "magnus_vs_exact_relative",
                (exact - magnus).abs() / magnus.abs(),
            );
            art.scalar(
                "magnus_vs_standard_relative",
                (standard - magnus).abs() / magnus.abs(),
            );
        }
    }
    art.count("n_max", n_max);
    art.count("rk4_steps", fock.steps);
    art.count("time_points", times.len());
    art.tables.push((
        String::new(),
        ScanResult::new(Column::new("tau", "s", times), cols)?,
    ));
    Ok(art)
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
