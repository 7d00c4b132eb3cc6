use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use ionsim::cli::{configure_threads, parse_config, run, ExperimentName};
use ionsim::Error;

#[derive(Debug, Parser)]
#[command(
    name = "ionsim",
    version,
    about = "Multimode Mølmer–Sørensen gate and Ising-coupling simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Equilibrium crystal and transverse mode report
    Modes(Args),
    /// Calibrate the gate, then time scan, parity scan and fidelity bound
    Gate(Args),
    /// Ising couplings J_{i,j} over a beatnote detuning grid
    ScanDetuning(Args),
    /// Spin populations P_n over a duration grid
    ScanTime(Args),
    /// Fit Ising couplings to a P_0 time series from CSV
    ExtractJ(Args),
    /// Closed-form dynamics against truncated-Fock integration
    OracleCheck(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// Run configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding [output] dir
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (ExperimentName, Args) {
        match self {
            Command::Modes(a) => (ExperimentName::Modes, a),
            Command::Gate(a) => (ExperimentName::Gate, a),
            Command::ScanDetuning(a) => (ExperimentName::DetuningScan, a),
            Command::ScanTime(a) => (ExperimentName::TimeScan, a),
            Command::ExtractJ(a) => (ExperimentName::ExtractJ, a),
            Command::OracleCheck(a) => (ExperimentName::OracleCheck, a),
        }
    }
}

fn execute(name: ExperimentName, args: &Args) -> Result<(), Error> {
    configure_threads()?;
    let text = std::fs::read_to_string(&args.config)?;
    let config = parse_config(&text)?;
    let config_dir = args.config.parent().unwrap_or(Path::new("."));
    let out_dir = match (&args.out, &config.output_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => config_dir.join(dir),
        (None, None) => PathBuf::from("ionsim-out"),
    };
    let start = Instant::now();
    let output = run(name, &config, config_dir, &out_dir)?;
    for (key, value) in &output.summary {
        eprintln!("ionsim: {key} = {value:e}");
    }
    eprintln!(
        "ionsim: wall_clock_s = {:.3}",
        start.elapsed().as_secs_f64()
    );
    for path in &output.files {
        println!("{}", path.display());
    }
    Ok(())
}

fn error_report(err: &Error) -> serde_json::Value {
    serde_json::json!({
        "error": { "kind": err.kind(), "message": err.to_string() }
    })
}

fn main() -> ExitCode {
    let (name, args) = Cli::parse().command.split();
    match execute(name, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            println!("{}", error_report(&err));
            eprintln!("ionsim: error: {err}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ionsim::cli::read_csv;

    const THREE_ION: &str = "[trap]\nions = 3\naxial_hz = 1484000\ntransverse_hz = 3952000\n\n[experiment]\nname = modes\n";

    fn invoke(argv: &[&str]) -> Result<(), Error> {
        let cli =
            Cli::try_parse_from(std::iter::once("ionsim").chain(argv.iter().copied())).unwrap();
        let (name, args) = cli.command.split();
        execute(name, &args)
    }

    fn failure(dir: &Path, text: &str, command: &str) -> serde_json::Value {
        let config = dir.join("c.ini");
        std::fs::write(&config, text).unwrap();
        let err = invoke(&[command, "--config", config.to_str().unwrap()]).unwrap_err();
        error_report(&err)
    }

    #[test]
    fn modes_report_for_three_ions() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("c.ini");
        let out = dir.path().join("res");
        std::fs::write(&config, THREE_ION).unwrap();
        invoke(&[
            "modes",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();

        let cols = read_csv(&out.join("modes.csv")).unwrap();
        let names: Vec<&str> = cols.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            ["mode", "omega", "b_1", "b_2", "b_3", "eta_1", "eta_2", "eta_3"]
        );
        assert_eq!(cols[0].values, [1.0, 2.0, 3.0]);
        assert!(cols[1].values.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(cols[1].unit, "rad/s");

        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("modes.json")).unwrap())
                .unwrap();
        for key in ["config_echo", "crystal", "results", "timings"] {
            assert!(doc.get(key).is_some(), "missing {key}");
        }
        assert_eq!(doc["timings"]["modes"], 3);
    }

    #[test]
    fn output_dir_resolves_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("c.ini");
        std::fs::write(
            &config,
            format!("{THREE_ION}\n[output]\ndir = nested/run\n"),
        )
        .unwrap();
        invoke(&["modes", "--config", config.to_str().unwrap()]).unwrap();
        assert!(dir.path().join("nested/run/modes.json").exists());
    }

    #[test]
    fn missing_trap_section_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let v = failure(dir.path(), "[experiment]\nname = modes\n", "modes");
        assert_eq!(v["error"]["kind"], "config");
        assert!(v["error"]["message"].as_str().unwrap().contains("trap"));
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let text = THREE_ION.replace("ions = 3", "ions = 3\nions_count = 4");
        let v = failure(dir.path(), &text, "modes");
        let message = v["error"]["message"].as_str().unwrap();
        assert!(
            message.contains("ions_count") && message.contains('3'),
            "{message}"
        );
    }

    #[test]
    fn command_must_match_configured_experiment() {
        let dir = tempfile::tempdir().unwrap();
        let v = failure(dir.path(), THREE_ION, "gate");
        assert_eq!(v["error"]["kind"], "config");
    }

    #[test]
    fn missing_config_file_is_an_io_error() {
        let err = invoke(&["modes", "--config", "/nonexistent/c.ini"]).unwrap_err();
        assert_eq!(error_report(&err)["error"]["kind"], "io");
    }

    #[test]
    fn unknown_subcommand_is_rejected() {
        assert!(Cli::try_parse_from(["ionsim", "warp", "--config", "c.ini"]).is_err());
        assert!(Cli::try_parse_from(["ionsim", "modes"]).is_err());
    }

    #[test]
    fn extract_j_recovers_scan_time_coupling() {
        let dir = tempfile::tempdir().unwrap();
        let scan = "[trap]\nions = 2\naxial_hz = 616000\ntransverse_hz = 3583800\n\n\
                    [drive]\ndetuning = offset 1 100000\nrabi = 300000\n\n\
                    [experiment]\nname = time_scan\ntau_stop_s = 0.002\ntau_points = 801\n\n\
                    [output]\ndir = scan\n";
        let fit = "[trap]\nions = 2\naxial_hz = 616000\ntransverse_hz = 3583800\n\n\
                   [experiment]\nname = extract_j\ninput_csv = scan/time_scan.csv\n\n\
                   [output]\ndir = fit\n";
        let (a, b) = (dir.path().join("scan.ini"), dir.path().join("fit.ini"));
        std::fs::write(&a, scan).unwrap();
        std::fs::write(&b, fit).unwrap();
        invoke(&["scan-time", "--config", a.to_str().unwrap()]).unwrap();
        invoke(&["extract-j", "--config", b.to_str().unwrap()]).unwrap();
        let doc: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("fit/extract_j.json")).unwrap(),
        )
        .unwrap();
        let j = doc["results"]["summary"]["J_1_2_rad_s"].as_f64().unwrap();
        assert!((j - 2278.0).abs() / 2278.0 < 0.01, "{j}");
    }
}
