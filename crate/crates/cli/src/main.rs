use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use critbranch_cli::error::{EXIT_CONFIG, EXIT_PASS, EXIT_VERDICT_FAIL};
use critbranch_cli::record::{persist, read_record};
use critbranch_cli::{replay, run, CliError, ExperimentConfig, Overrides, RunRecord, Task};

#[derive(Parser)]
#[command(name = "critbranch", version, about = "Critical branching experiments: spectra, solvers, simulation and limit checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "CRITBRANCH_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "CRITBRANCH_THREADS")]
    threads: Option<usize>,
    /// Output directory for records and CSV tables.
    #[arg(long, env = "CRITBRANCH_OUT")]
    out: Option<PathBuf>,
    /// Population cap for Monte Carlo runs.
    #[arg(long, env = "CRITBRANCH_CAP")]
    cap: Option<u64>,
}

#[derive(Subcommand)]
enum VerifyKind {
    Kolmogorov(Common),
    Yaglom(Common),
}

#[derive(Subcommand)]
enum Command {
    /// Perron triplet and Δ_t profile of the mean semigroup.
    Spectral(Common),
    /// Deterministic u_t / V_t and a_t.
    Solve(Common),
    /// Monte Carlo survival estimates.
    Simulate(Common),
    /// Assumption audits.
    Audit(Common),
    /// Limit-theorem verdicts.
    #[command(subcommand)]
    Verify(VerifyKind),
    /// Re-run a recorded experiment and require identical tables.
    Replay {
        record: PathBuf,
        /// Zero-based record index in the file; defaults to the last one.
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, env = "CRITBRANCH_THREADS")]
        threads: Option<usize>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    cfg.apply(&Overrides { seed: common.seed, threads: common.threads, out_dir: common.out.clone(), cap: common.cap });
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(rec: &RunRecord) {
    println!("task {} (config {})", rec.task, &rec.config_hash[..12]);
    for t in &rec.tables {
        println!("  table {}: {} rows x {} columns", t.name, t.rows.len(), t.columns.len());
    }
    if let Some(rep) = &rec.report {
        for r in &rep.rows {
            println!("  {:<3} {:<14} {}", r.assumption, format!("{:?}", r.status), r.evidence);
        }
    }
    for v in &rec.verdicts {
        println!(
            "  {:<4} {:<24} observed {:.6e} target {:.6e} tol {:.2e}{}",
            if v.pass { "PASS" } else { "FAIL" },
            v.criterion,
            v.observed,
            v.target,
            v.tolerance,
            match v.trend_ok {
                Some(true) => " (trend ok)",
                Some(false) => " (trend failed)",
                None => "",
            }
        );
        if let Some(note) = &v.note {
            println!("       {note}");
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let (common, task) = match cli.command {
        Command::Spectral(c) => (c, Task::Spectral),
        Command::Solve(c) => (c, Task::Solve),
        Command::Simulate(c) => (c, Task::Simulate),
        Command::Audit(c) => (c, Task::Audit),
        Command::Verify(VerifyKind::Kolmogorov(c)) => (c, Task::VerifyKolmogorov),
        Command::Verify(VerifyKind::Yaglom(c)) => (c, Task::VerifyYaglom),
        Command::Replay { record, index, threads } => {
            let rec = read_record(&record, index)?;
            let again = replay(&rec, threads)?;
            println!("replay identical: {} tables", again.tables.len());
            return Ok(EXIT_PASS);
        }
    };
    let cfg = load(&common)?;
    let rec = run(&cfg, Some(task))?;
    persist(&rec)?;
    summarize(&rec);
    Ok(if rec.all_pass() { EXIT_PASS } else { EXIT_VERDICT_FAIL })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
