//! Configuration, orchestration and persistence for `critbranch` runs.

pub mod config;
pub mod error;
pub mod record;
pub mod run;

pub use config::{ExperimentConfig, Overrides, Task};
pub use error::CliError;
pub use record::RunRecord;
pub use run::run;

/// Re-run a recorded experiment and require bit-identical tables.
/// `threads` may differ from the recorded value.
pub fn replay(record: &RunRecord, threads: Option<usize>) -> Result<RunRecord, CliError> {
    if record.schema_version != record::SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "record schema {} does not match {}",
            record.schema_version,
            record::SCHEMA_VERSION
        )));
    }
    if record::config_hash(&record.config) != record.config_hash {
        return Err(CliError::Config("record config does not match its hash".into()));
    }
    let mut cfg = record.config.clone();
    if let Some(t) = threads {
        cfg.rng.threads = t;
    }
    let task = cfg.task;
    let again = run(&cfg, task)?;
    record::compare_tables(&record.tables, &again.tables)?;
    Ok(again)
}
