//! Configuration, experiment dispatch and artifact output for `ionsim`.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, serialize_config, ConfigError, ExperimentName, RunConfig};
pub use output::{csv_text, emit_csv, read_csv};
pub use run::{configure_threads, run, RunOutput};
