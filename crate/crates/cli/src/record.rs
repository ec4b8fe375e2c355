//! Run records (JSON lines) and CSV tables.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use critbranch::verify::{AssumptionReport, Verdict};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A named numeric table. Non-finite cells are stored as strings so that
/// records survive a JSON round trip bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(with = "cells")]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Table { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s.push_str(&format!("# config_hash={config_hash}\n"));
        s
    }
}

mod cells {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::Value;

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Vec<Value>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&x| match serde_json::Number::from_f64(x) {
                        Some(n) => Value::Number(n),
                        None => Value::String(format!("{x}")),
                    })
                    .collect()
            })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let v: Vec<Vec<Value>> = Vec::deserialize(d)?;
        v.into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|c| match c {
                        Value::Number(n) => n.as_f64().ok_or_else(|| D::Error::custom("bad number")),
                        Value::String(s) => s.parse::<f64>().map_err(D::Error::custom),
                        _ => Err(D::Error::custom("cell must be a number or a string")),
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub task: String,
    pub git_describe: String,
    pub started: String,
    pub finished: String,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
    #[serde(default)]
    pub report: Option<AssumptionReport>,
}

impl RunRecord {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// SHA-256 of the canonical config with the fields that cannot change
/// results (thread count, output location) reset.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.rng.threads = 1;
    c.io = Default::default();
    let digest = Sha256::digest(c.canonical_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Append the record to `records.jsonl` and write each table as CSV, as
/// selected by `io.formats`. Returns the written paths.
pub fn persist(record: &RunRecord) -> Result<Vec<PathBuf>, CliError> {
    let io = &record.config.io;
    fs::create_dir_all(&io.out_dir)?;
    let mut written = Vec::new();
    if io.formats.iter().any(|f| f == "jsonl") {
        let path = io.out_dir.join("records.jsonl");
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        writeln!(f, "{}", serde_json::to_string(record).expect("record serializes"))?;
        written.push(path);
    }
    if io.formats.iter().any(|f| f == "csv") {
        for t in &record.tables {
            let path = io.out_dir.join(format!("{}_{}.csv", record.task, t.name));
            fs::write(&path, t.to_csv(&record.config_hash))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Read the record at `index` (default: last) from a JSON-lines file.
pub fn read_record(path: &Path, index: Option<usize>) -> Result<RunRecord, CliError> {
    let text = fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let line = match index {
        Some(i) => lines.get(i),
        None => lines.last(),
    }
    .ok_or_else(|| CliError::Config(format!("no record in {}", path.display())))?;
    serde_json::from_str(line).map_err(|e| CliError::Config(format!("unreadable record: {e}")))
}

/// First cell where two table sets differ bitwise.
pub fn compare_tables(recorded: &[Table], replayed: &[Table]) -> Result<(), CliError> {
    let mismatch = |table: &str, row: usize, column: &str, a: String, b: String| CliError::ReplayMismatch {
        table: table.into(),
        row,
        column: column.into(),
        recorded: a,
        replayed: b,
    };
    if recorded.len() != replayed.len() {
        return Err(mismatch("*", 0, "*", format!("{} tables", recorded.len()), format!("{} tables", replayed.len())));
    }
    for (a, b) in recorded.iter().zip(replayed) {
        if a.name != b.name || a.columns != b.columns || a.rows.len() != b.rows.len() {
            return Err(mismatch(&a.name, 0, "*", format!("{:?}", a.columns), format!("{:?}", b.columns)));
        }
        for (i, (ra, rb)) in a.rows.iter().zip(&b.rows).enumerate() {
            for (j, (x, y)) in ra.iter().zip(rb).enumerate() {
                if x.to_bits() != y.to_bits() && !(x.is_nan() && y.is_nan()) {
                    return Err(mismatch(&a.name, i, &a.columns[j], format!("{x:?}"), format!("{y:?}")));
                }
            }
        }
    }
    Ok(())
}
