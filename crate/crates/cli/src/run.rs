//! Task dispatch: one config in, one [`RunRecord`] out.

use critbranch::evolution::{solve_at_with, solve_v_csbp, solve_v_multitype, yaglom_ratios, Record, VInit};
use critbranch::models::{audit_h4, Model, DEFAULT_H4_SPREAD};
use critbranch::montecarlo::{conditional_laplace, estimate_survival, McConfig, Method, SpineMode, Start, SurvivalTable};
use critbranch::regvar::{log_grid, survival_asymptote};
use critbranch::spectral::{delta_profile, eigen_triplet, generator_l, residuals, EigenTriplet};
use critbranch::verify::{
    assumption_report, kolmogorov_verdict, yaglom_target, yaglom_verdict, InitialMeasure, LaplaceData, Status,
    SurvivalData, Tolerances, Verdict,
};

use crate::config::{ExperimentConfig, McMethod, Source, Task};
use crate::error::CliError;
use crate::record::{config_hash, git_describe, RunRecord, Table, SCHEMA_VERSION};

/// Default `θ'` grid: 13 log-spaced points on `[0.1, 10]`.
pub fn default_theta_eff_grid() -> Vec<f64> {
    log_grid(0.1, 10.0, 6)
}

struct Outcome {
    tables: Vec<Table>,
    verdicts: Vec<Verdict>,
    report: Option<critbranch::verify::AssumptionReport>,
}

impl Outcome {
    fn tables(tables: Vec<Table>) -> Self {
        Outcome { tables, verdicts: Vec::new(), report: None }
    }
}

/// Run the configured task. The task must be given either in the config or
/// as `task`; they must agree when both are present.
pub fn run(config: &ExperimentConfig, task: Option<Task>) -> Result<RunRecord, CliError> {
    let task = match (task, config.task) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Config(format!("task: config says {} but {} was requested", b.name(), a.name())))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(CliError::Config("task: none given".into())),
    };
    let mut cfg = config.clone();
    cfg.task = Some(task);
    cfg.validate()?;
    let started = chrono::Utc::now().to_rfc3339();
    let model = cfg.build_model()?;
    let out = match task {
        Task::Spectral => spectral(&cfg, &model)?,
        Task::Solve => solve(&cfg, &model)?,
        Task::Simulate => simulate(&cfg, &model)?,
        Task::VerifyKolmogorov => verify_kolmogorov(&cfg, &model)?,
        Task::VerifyYaglom => verify_yaglom(&cfg, &model)?,
        Task::Audit => audit(&model),
    };
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash(&cfg),
        task: task.name().into(),
        config: cfg,
        git_describe: git_describe(),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        tables: out.tables,
        verdicts: out.verdicts,
        report: out.report,
    })
}

fn t_grid(cfg: &ExperimentConfig, default: impl FnOnce(f64) -> Vec<f64>) -> Vec<f64> {
    cfg.numeric.t_grid.clone().unwrap_or_else(|| default(cfg.numeric.horizon))
}

fn uniform(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

fn triplet(model: &Model) -> Result<EigenTriplet, CliError> {
    Ok(eigen_triplet(&generator_l(model))?)
}

fn spectral(cfg: &ExperimentConfig, model: &Model) -> Result<Outcome, CliError> {
    let l = generator_l(model);
    let tr = eigen_triplet(&l)?;
    let (r1, r2) = residuals(&l, &tr);
    let mut summary = Table::new("summary", &["lambda", "residual_right", "residual_left"]);
    summary.push(vec![tr.lambda, r1, r2]);
    let mut eig = Table::new("eigen", &["state", "phi", "phi_tilde"]);
    for i in 0..tr.dim() {
        eig.push(vec![i as f64, tr.phi[i], tr.phi_tilde[i]]);
    }
    let grid = t_grid(cfg, |h| uniform(h, 20));
    let prof = delta_profile(&l, &tr, &grid);
    let mut delta = Table::new("delta", &["t", "delta"]);
    for (t, d) in prof.t_grid.iter().zip(&prof.delta_values) {
        delta.push(vec![*t, *d]);
    }
    Ok(Outcome::tables(vec![summary, eig, delta]))
}

fn state_columns(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}_{i}")).collect()
}

fn solve(cfg: &ExperimentConfig, model: &Model) -> Result<Outcome, CliError> {
    let n = model.dim();
    let tr = triplet(model)?;
    if model.is_superprocess() {
        let grid: Vec<f64> = t_grid(cfg, |h| uniform(h, 100)).into_iter().filter(|t| *t > 0.0).collect();
        let sol = superprocess_v(cfg, model, &tr, &grid)?;
        let mut cols = vec!["t".to_string(), "a_t".to_string()];
        cols.extend(state_columns("v", n));
        let mut table = Table::with_columns("solution", cols);
        for (k, t) in grid.iter().enumerate() {
            let mut row = vec![*t, tr.pair_with_phi_tilde(&sol[k])];
            row.extend_from_slice(&sol[k]);
            table.push(row);
        }
        return Ok(Outcome::tables(vec![table]));
    }
    let grid = t_grid(cfg, |h| uniform(h, 100));
    let sol = solve_at_with(model, &tr, *grid.last().expect("non-empty"), cfg.numeric.dt, Record::At(&grid))?;
    let mut cols = vec!["t".to_string(), "a_t".to_string()];
    cols.extend(state_columns("u", n));
    let mut table = Table::with_columns("solution", cols);
    for (k, t) in grid.iter().enumerate() {
        let mut row = vec![*t, sol.a.value(k)[0]];
        row.extend_from_slice(sol.u.value(k));
        table.push(row);
    }
    Ok(Outcome::tables(vec![table]))
}

/// `V_t(∞)` per type at each grid time (all positive).
fn superprocess_v(cfg: &ExperimentConfig, model: &Model, tr: &EigenTriplet, grid: &[f64]) -> Result<Vec<Vec<f64>>, CliError> {
    if grid.is_empty() {
        return Err(CliError::Config("numeric.t_grid: needs a positive time for a superprocess".into()));
    }
    if let Model::StableCsbp(s) = model {
        return grid.iter().map(|&t| Ok(vec![solve_v_csbp(s, f64::INFINITY, t)?])).collect();
    }
    let t0 = (grid[0] * 0.5).min(0.5);
    let sol = solve_v_multitype(model, Some(tr), &VInit::Infinite, *grid.last().expect("non-empty"), cfg.numeric.dt, t0, Record::At(grid))?;
    Ok((0..grid.len()).map(|k| sol.v.value(k).to_vec()).collect())
}

fn mc_config(cfg: &ExperimentConfig) -> McConfig {
    McConfig {
        n_reps: cfg.numeric.n_reps,
        seed: cfg.rng.seed,
        threads: cfg.rng.threads,
        cap: cfg.numeric.cap,
        dt: cfg.numeric.mc_dt,
        table_dt: cfg.numeric.table_dt,
        ..McConfig::default()
    }
}

fn method(cfg: &ExperimentConfig) -> Method {
    match cfg.numeric.method {
        McMethod::Direct => Method::Direct,
        McMethod::Spine => Method::Spine(SpineMode::Conditional),
        McMethod::SpineFull => Method::Spine(SpineMode::Full),
    }
}

fn start(cfg: &ExperimentConfig, model: &Model) -> Result<Start, CliError> {
    match model {
        Model::Diffusion(d) => {
            let x = cfg.numeric.start_position.unwrap_or(d.d() / 2.0);
            if !(x > 0.0 && x < d.d()) {
                return Err(CliError::Config(format!("numeric.start_position: must lie in (0, {})", d.d())));
            }
            Ok(Start::Position(x))
        }
        m if m.is_superprocess() => Err(CliError::Config("model: Monte Carlo needs a particle model".into())),
        m => {
            if cfg.numeric.start_type >= m.dim() {
                return Err(CliError::Config(format!("numeric.start_type: model has {} types", m.dim())));
            }
            Ok(Start::Type(cfg.numeric.start_type))
        }
    }
}

fn survival_table(table: &SurvivalTable) -> Table {
    let mut t = Table::new("survival", &["t", "p_hat", "stderr", "ci_lo", "ci_hi", "n_effective", "censored"]);
    for r in &table.rows {
        t.push(vec![r.t, r.p_hat, r.stderr, r.ci_lo, r.ci_hi, r.n_effective, r.censored as f64]);
    }
    t
}

fn simulate(cfg: &ExperimentConfig, model: &Model) -> Result<Outcome, CliError> {
    let grid = t_grid(cfg, |h| uniform(h, 10));
    let table = estimate_survival(model, &start(cfg, model)?, &grid, method(cfg), &mc_config(cfg))?;
    Ok(Outcome::tables(vec![survival_table(&table)]))
}

fn tolerances(cfg: &ExperimentConfig) -> Tolerances {
    Tolerances { relative: cfg.numeric.relative_tol, sigmas: cfg.numeric.sigmas }
}

/// Initial measure: `start_weights` if given, else one particle.
fn initial_measure(cfg: &ExperimentConfig, model: &Model) -> Result<InitialMeasure, CliError> {
    match &cfg.numeric.start_weights {
        Some(w) => {
            if w.len() != model.dim() || w.iter().any(|v| !(*v >= 0.0)) {
                return Err(CliError::Config("numeric.start_weights: one non-negative weight per type".into()));
            }
            if !model.is_superprocess() && w.iter().any(|v| v.fract() != 0.0) {
                return Err(CliError::Config("numeric.start_weights: particle counts must be integers".into()));
            }
            Ok(InitialMeasure::Weights(w.clone()))
        }
        None if cfg.numeric.start_type < model.dim() => Ok(InitialMeasure::Point(cfg.numeric.start_type)),
        None => Err(CliError::Config(format!("numeric.start_type: model has {} types", model.dim()))),
    }
}

fn verify_kolmogorov(cfg: &ExperimentConfig, model: &Model) -> Result<Outcome, CliError> {
    let tr = triplet(model)?;
    let fit = audit_h4(model, &tr, &log_grid(1e-6, 1e-2, 4), DEFAULT_H4_SPREAD)?;
    let grid: Vec<f64> = t_grid(cfg, |h| log_grid(h / 100.0, h, 5)).into_iter().filter(|t| *t > 0.0).collect();
    let mu = initial_measure(cfg, model)?;
    let mut table = Table::new("kolmogorov", &["t", "survival", "asymptote", "ratio"]);
    let verdict = match cfg.numeric.source {
        Source::Deterministic => {
            let values: Vec<f64> = if model.is_superprocess() {
                // `−ln P_μ(ζ ≤ t) = ⟨V_t(∞), μ⟩`.
                superprocess_v(cfg, model, &tr, &grid)?.iter().map(|v| mu_pair(&mu, v)).collect()
            } else {
                let sol = solve_at_with(model, &tr, *grid.last().expect("non-empty"), cfg.numeric.dt, Record::At(&grid))?;
                (0..grid.len()).map(|k| particle_survival(&mu, sol.u.value(k))).collect()
            };
            for (t, v) in grid.iter().zip(&values) {
                let s = survival_asymptote(fit.alpha_hat, &fit.ell_hat, *t)?;
                table.push(vec![*t, *v, s, v / s]);
            }
            let data = SurvivalData::Deterministic { t: &grid, values: &values };
            kolmogorov_verdict(model, &mu, data, fit.alpha_hat, &fit.ell_hat, tolerances(cfg))?
        }
        Source::MonteCarlo => {
            let st = match &mu {
                InitialMeasure::Point(i) => match model {
                    Model::Diffusion(_) => start(cfg, model)?,
                    _ => Start::Type(*i),
                },
                InitialMeasure::Weights(w) => Start::Counts(w.iter().map(|v| *v as u64).collect()),
            };
            let surv = estimate_survival(model, &st, &grid, method(cfg), &mc_config(cfg))?;
            for r in &surv.rows {
                let s = survival_asymptote(fit.alpha_hat, &fit.ell_hat, r.t)?;
                table.push(vec![r.t, r.p_hat, s, r.p_hat / s]);
            }
            let v = kolmogorov_verdict(model, &mu, SurvivalData::MonteCarlo(&surv), fit.alpha_hat, &fit.ell_hat, tolerances(cfg))?;
            return Ok(Outcome { tables: vec![table, survival_table(&surv)], verdicts: vec![v], report: None });
        }
    };
    Ok(Outcome { tables: vec![table], verdicts: vec![verdict], report: None })
}

fn mu_pair(mu: &InitialMeasure, v: &[f64]) -> f64 {
    match mu {
        InitialMeasure::Point(i) => v[*i],
        InitialMeasure::Weights(w) => w.iter().zip(v).map(|(a, b)| a * b).sum(),
    }
}

/// `1 − Π_i (1 − u_i)^{μ_i}`, computed in log space.
fn particle_survival(mu: &InitialMeasure, u: &[f64]) -> f64 {
    match mu {
        InitialMeasure::Point(i) => u[*i],
        InitialMeasure::Weights(w) => -w.iter().zip(u).map(|(k, ui)| k * (-ui).ln_1p()).sum::<f64>().exp_m1(),
    }
}

fn verify_yaglom(cfg: &ExperimentConfig, model: &Model) -> Result<Outcome, CliError> {
    let tr = triplet(model)?;
    let n = model.dim();
    let f = cfg.numeric.f_dir.clone().unwrap_or_else(|| vec![1.0; n]);
    if f.len() != n || f.iter().any(|v| !(*v >= 0.0)) || f.iter().all(|v| *v == 0.0) {
        return Err(CliError::Config("numeric.f_dir: one non-negative entry per type, not all zero".into()));
    }
    let pairing = tr.pair_with_phi_tilde(&f);
    let thetas = cfg
        .numeric
        .theta_grid
        .clone()
        .unwrap_or_else(|| default_theta_eff_grid().iter().map(|t| t / pairing).collect());
    let t = cfg.numeric.horizon;
    let alpha = model.tail_index();
    match cfg.numeric.source {
        Source::Deterministic => {
            let pts = yaglom_ratios(model, &tr, &thetas, &f, t, cfg.numeric.dt)?;
            let mut cols = vec!["theta".to_string(), "theta_eff".to_string(), "target".to_string()];
            cols.extend(state_columns("ratio", n));
            let has_v = pts.first().is_some_and(|p| p.v_ratio.is_some());
            if has_v {
                cols.extend(state_columns("v_ratio", n));
            }
            let mut table = Table::with_columns("yaglom", cols);
            for p in &pts {
                let mut row = vec![p.theta, p.theta_eff, p.limit];
                row.extend_from_slice(&p.ratio);
                if let Some(v) = &p.v_ratio {
                    row.extend_from_slice(v);
                }
                table.push(row);
            }
            let verdicts = yaglom_verdict(alpha, LaplaceData::Deterministic(&pts), tolerances(cfg));
            Ok(Outcome { tables: vec![table], verdicts, report: None })
        }
        Source::MonteCarlo => {
            let st = start(cfg, model)?;
            let sol = solve_at_with(model, &tr, t, cfg.numeric.dt, Record::At(&[t]))?;
            let a_t = sol.a.value(0)[0];
            let rows = conditional_laplace(model, &st, t, &f, &thetas, a_t, method(cfg), &mc_config(cfg))?;
            let mut table = Table::new("yaglom", &["theta", "theta_eff", "target", "lf", "stderr"]);
            for r in &rows {
                table.push(vec![r.theta, r.theta * pairing, yaglom_target(alpha, r.theta * pairing), r.lf, r.stderr]);
            }
            let verdicts = yaglom_verdict(alpha, LaplaceData::MonteCarlo { rows: &rows, pairing }, tolerances(cfg));
            Ok(Outcome { tables: vec![table], verdicts, report: None })
        }
    }
}

fn audit(model: &Model) -> Outcome {
    let report = assumption_report(model);
    let mut table = Table::new("assumptions", &["index", "status", "value"]);
    for (i, r) in report.rows.iter().enumerate() {
        let status = match r.status {
            Status::Pass => 0.0,
            Status::Fail => 1.0,
            Status::NotApplicable => 2.0,
        };
        table.push(vec![i as f64 + 1.0, status, r.value.unwrap_or(f64::NAN)]);
    }
    Outcome { tables: vec![table], verdicts: Vec::new(), report: Some(report) }
}
