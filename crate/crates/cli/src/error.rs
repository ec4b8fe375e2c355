use thiserror::Error;

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERDICT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TASK: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("task error: {0}")]
    Task(#[from] critbranch::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("replay mismatch in table {table:?} at row {row}, column {column:?}: recorded {recorded}, replayed {replayed}")]
    ReplayMismatch {
        table: String,
        row: usize,
        column: String,
        recorded: String,
        replayed: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Task(_) | CliError::Io(_) => EXIT_TASK,
            CliError::ReplayMismatch { .. } => EXIT_VERDICT_FAIL,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Task(_) => "task_error",
            CliError::Io(_) => "io_error",
            CliError::ReplayMismatch { .. } => "replay_mismatch",
        }
    }
}
