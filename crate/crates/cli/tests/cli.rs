use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use critbranch_cli::record::{read_record, SCHEMA_VERSION};

const SWAP: &str = r#"
[model]
type = "multitype_gw"
beta = [1.0, 1.0]
displacement = [[0.0, 1.0], [1.0, 0.0]]
offspring = [
    { type = "finite", pmf = [0.5, 0.0, 0.5] },
    { type = "finite", pmf = [0.5, 0.0, 0.5] },
]
"#;

const SLACK: &str = r#"
[model]
type = "slack_gw"
beta = 1.0
alpha = 0.5
c = 0.5
"#;

fn critbranch(dir: &Path, args: &[&str], toml: &str) -> Output {
    let cfg = dir.join("experiment.toml");
    fs::write(&cfg, toml).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_critbranch"));
    cmd.args(args).arg("--config").arg(&cfg).arg("--out").arg(dir.join("out"));
    cmd.env_remove("CRITBRANCH_SEED").env_remove("CRITBRANCH_THREADS").env_remove("CRITBRANCH_CAP");
    cmd.output().unwrap()
}

fn replay(dir: &Path, threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_critbranch"))
        .args(["replay", "--threads", threads])
        .arg(dir.join("out/records.jsonl"))
        .output()
        .unwrap()
}

#[test]
fn spectral_writes_record_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = critbranch(dir.path(), &["spectral"], SWAP);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = read_record(&dir.path().join("out/records.jsonl"), None).unwrap();
    assert_eq!(rec.schema_version, SCHEMA_VERSION);
    let eigen = rec.table("eigen").unwrap();
    assert_eq!(eigen.rows.len(), 2);
    let csv = fs::read_to_string(dir.path().join("out/spectral_delta.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("# config_hash="));
    assert!(csv.contains(&rec.config_hash));
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let negative = SLACK.replace("beta = 1.0", "beta = -1.0");
    assert_eq!(critbranch(dir.path(), &["solve"], &negative).status.code(), Some(2));
    let unknown = format!("{SLACK}\nbogus = 3\n");
    assert_eq!(critbranch(dir.path(), &["solve"], &unknown).status.code(), Some(2));
    let bad_pmf = SWAP.replace("[0.5, 0.0, 0.5] },\n]", "[0.5, 0.0, 0.6] },\n]");
    assert_eq!(critbranch(dir.path(), &["spectral"], &bad_pmf).status.code(), Some(2));
}

#[test]
fn verdict_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let stable = "[model]\ntype = \"stable_csbp\"\nkappa = 1.0\nalpha = 0.5\n[numeric]\nhorizon = 20.0\n";
    assert_eq!(critbranch(dir.path(), &["verify", "yaglom"], stable).status.code(), Some(0));
    // A loose horizon with a strict tolerance fails the survival verdict.
    let strict = format!("{SLACK}[numeric]\nhorizon = 10.0\nrelative_tol = 1e-6\n");
    assert_eq!(critbranch(dir.path(), &["verify", "kolmogorov"], &strict).status.code(), Some(1));
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let sim = format!("{SLACK}[numeric]\nhorizon = 8.0\nt_grid = [2.0, 8.0]\nn_reps = 3000\n[rng]\nseed = 5\nthreads = 2\n");
    assert_eq!(critbranch(dir.path(), &["simulate"], &sim).status.code(), Some(0));
    for threads in ["1", "3"] {
        let out = replay(dir.path(), threads);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }

    let path = dir.path().join("out/records.jsonl");
    let line = fs::read_to_string(&path).unwrap();
    let mut rec: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    let cell = &mut rec["tables"][0]["rows"][0][1];
    *cell = serde_json::json!(cell.as_f64().unwrap() + 1e-3);
    fs::write(&path, format!("{rec}\n")).unwrap();
    let out = replay(dir.path(), "1");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("survival"));
}

#[test]
fn seed_override_changes_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let sim = format!("{SLACK}[numeric]\nhorizon = 2.0\nt_grid = [2.0]\nn_reps = 500\n");
    critbranch(dir.path(), &["simulate"], &sim);
    critbranch(dir.path(), &["simulate", "--seed", "17"], &sim);
    critbranch(dir.path(), &["simulate", "--threads", "4"], &sim);
    let path = dir.path().join("out/records.jsonl");
    let hashes: Vec<String> = (0..3).map(|i| read_record(&path, Some(i)).unwrap().config_hash).collect();
    assert_ne!(hashes[0], hashes[1]);
    assert_eq!(hashes[0], hashes[2]);
}
