//! Monte Carlo simulation with reproducible, thread-count independent
//! random streams.
//!
//! Replica `i` of a run with seed `s` always draws from ChaCha8 stream `i`
//! keyed by `s`, and results are reduced in replica order, so output does
//! not depend on the size of the thread pool.

mod diffusion;
mod population;
mod spine;
mod tables;

pub use diffusion::{bridge_stay, simulate_branching_diffusion, simulate_branching_diffusion_observed};
pub use population::{simulate_bmp, simulate_bmp_observed, Particles, PopulationState, DEFAULT_CAP};
pub use spine::{
    conditional_weight, diffusion_skeleton, gw_skeleton, simulate_spine, SpineAt, SpineEvent, SpineMode,
    SpineSkeleton, SpineState,
};
pub use tables::LaplaceTables;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{BranchingDiffusion1D, Model, MultiTypeGW};
use crate::spectral::{eigen_triplet, generator_l};

/// Fewest replicas accepted by the estimators.
pub const MIN_REPLICAS: usize = 100;
const Z95: f64 = 1.959963984540054;

pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Results of `n` replicas, in replica order.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaBatch<T> {
    pub seed: u64,
    /// Stream index of the first replica; replica `k` uses `first_stream + k`.
    pub first_stream: u64,
    pub results: Vec<T>,
}

impl<T> ReplicaBatch<T> {
    pub fn n_reps(&self) -> usize {
        self.results.len()
    }
}

/// Run `f` once per replica on a pool of `threads` workers.
pub fn run_replicas<T, F>(n: usize, seed: u64, threads: usize, f: F) -> Result<ReplicaBatch<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let results: Result<Vec<T>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = replica_rng(seed, i as u64);
                f(i, &mut rng)
            })
            .collect()
    });
    Ok(ReplicaBatch { seed, first_stream: 0, results: results? })
}

/// Initial configuration of a replica.
#[derive(Clone, Debug, PartialEq)]
pub enum Start {
    /// One particle of this type.
    Type(usize),
    /// Given counts per type (direct simulation only).
    Counts(Vec<u64>),
    /// One particle at this position.
    Position(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Direct,
    Spine(SpineMode),
}

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub n_reps: usize,
    pub seed: u64,
    pub threads: usize,
    pub cap: u64,
    /// Largest Brownian increment in direct diffusion runs; the result is
    /// unbiased for any value.
    pub dt: f64,
    /// RK4 step for the spine Laplace tables.
    pub table_dt: f64,
    /// Bootstrap resamples for spine confidence intervals.
    pub bootstrap: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_reps: 10_000,
            seed: 0,
            threads: 1,
            cap: DEFAULT_CAP,
            dt: 0.02,
            table_dt: 0.01,
            bootstrap: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalRow {
    pub t: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Uncensored replicas for direct runs; `(Σw)²/Σw²` for spine runs.
    pub n_effective: f64,
    pub censored: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalTable {
    pub method: Method,
    pub n_reps: usize,
    pub rows: Vec<SurvivalRow>,
}

/// Per-replica survival scores at each time: indicator (direct) or
/// `φ(x)·E^φ[1/Y_t | ·]` (spine), plus a censoring flag.
type Scores = ReplicaBatch<(Vec<f64>, bool)>;

fn gw_of(model: &Model) -> Option<&MultiTypeGW> {
    model.as_gw()
}

fn diffusion_of(model: &Model) -> Option<&BranchingDiffusion1D> {
    match model {
        Model::Diffusion(d) => Some(d),
        _ => None,
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || t_grid.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::Domain("t_grid must be a non-empty sorted list of times".into()));
    }
    Ok(())
}

/// Survival probability `P(X_t ≠ 0)` on `t_grid`.
pub fn estimate_survival(model: &Model, start: &Start, t_grid: &[f64], method: Method, cfg: &McConfig) -> Result<SurvivalTable> {
    check_grid(t_grid)?;
    if cfg.n_reps < MIN_REPLICAS {
        return Err(Error::InsufficientReplicas(format!("{} replicas, need at least {MIN_REPLICAS}", cfg.n_reps)));
    }
    let scores = match method {
        Method::Direct => direct_scores(model, start, t_grid, cfg, None)?,
        Method::Spine(mode) => spine_scores(model, start, t_grid, mode, cfg, None)?,
    };
    let n = scores.n_reps();
    let censored = scores.results.iter().filter(|r| r.1).count();
    if censored == n {
        return Err(Error::InsufficientReplicas("every replica was censored".into()));
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        let column: Vec<f64> = scores.results.iter().map(|r| r.0[k]).collect();
        rows.push(match method {
            Method::Direct => direct_row(t, &column, censored),
            Method::Spine(_) => spine_row(t, &column, censored, cfg, k as u64),
        });
    }
    Ok(SurvivalTable { method, n_reps: n, rows })
}

fn direct_row(t: f64, column: &[f64], censored: usize) -> SurvivalRow {
    let n = column.len() as f64;
    let p = column.iter().sum::<f64>() / n;
    let (lo, hi) = wilson(p, n);
    SurvivalRow {
        t,
        p_hat: p,
        stderr: (p * (1.0 - p) / n).sqrt(),
        ci_lo: lo,
        ci_hi: hi,
        n_effective: n - censored as f64,
        censored,
    }
}

/// Wilson score interval at 95%.
pub fn wilson(p: f64, n: f64) -> (f64, f64) {
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn spine_row(t: f64, column: &[f64], censored: usize, cfg: &McConfig, stream: u64) -> SurvivalRow {
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sum_sq: f64 = column.iter().map(|v| v * v).sum();
    let ess = if sum_sq > 0.0 { column.iter().sum::<f64>().powi(2) / sum_sq } else { 0.0 };
    let (lo, hi) = bootstrap_ci(column, cfg.bootstrap, cfg.seed ^ 0x9e37_79b9_7f4a_7c15, stream);
    SurvivalRow { t, p_hat: mean, stderr: (var / n).sqrt(), ci_lo: lo, ci_hi: hi, n_effective: ess, censored }
}

/// Percentile bootstrap interval for the mean at 95%.
pub fn bootstrap_ci(xs: &[f64], resamples: usize, seed: u64, stream: u64) -> (f64, f64) {
    if resamples < 2 || xs.is_empty() {
        let m = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        return (m, m);
    }
    let mut rng = replica_rng(seed, stream);
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (q(0.025), q(0.975))
}

/// Evaluate a function given at interior grid nodes of `(0, d)` at `x`,
/// linearly, with zero boundary values.
pub fn node_interp(values: &[f64], d: f64, x: f64) -> f64 {
    let n = values.len();
    let h = d / (n + 1) as f64;
    let z = (x / h).clamp(0.0, (n + 1) as f64);
    let i = (z as usize).min(n);
    let w = z - i as f64;
    let at = |j: usize| if j == 0 || j == n + 1 { 0.0 } else { values[j - 1] };
    at(i) * (1.0 - w) + at(i + 1) * w
}

/// Direct scores: survival indicator, or `1{alive}·e^{−⟨b, X_t⟩}` when a
/// base `b` is given.
fn direct_scores(model: &Model, start: &Start, t_grid: &[f64], cfg: &McConfig, base: Option<&[f64]>) -> Result<Scores> {
    if let Some(g) = gw_of(model) {
        let init = match start {
            Start::Type(i) if *i < g.n_types() => PopulationState::single(g.n_types(), *i),
            Start::Counts(c) if c.len() == g.n_types() => PopulationState::from_counts(c.clone()),
            _ => return Err(Error::Domain("start must name a type of the model".into())),
        };
        return run_replicas(cfg.n_reps, cfg.seed, cfg.threads, |_, rng| {
            let mut out = vec![0.0; t_grid.len()];
            let end = simulate_bmp_observed(g, init.clone(), t_grid, cfg.cap, rng, |k, s| {
                out[k] = score(s.is_alive(), s.censored, || base.map(|b| s.pair(b)));
            })?;
            Ok((out, end.censored))
        });
    }
    if let Some(dm) = diffusion_of(model) {
        let Start::Position(x0) = *start else {
            return Err(Error::Domain("a diffusion needs a starting position".into()));
        };
        let d = dm.d();
        return run_replicas(cfg.n_reps, cfg.seed, cfg.threads, |_, rng| {
            let mut out = vec![0.0; t_grid.len()];
            let end = simulate_branching_diffusion_observed(dm, &[x0], t_grid, cfg.dt, cfg.cap, rng, |k, s| {
                out[k] = score(s.is_alive(), s.censored, || {
                    base.map(|b| match &s.particles {
                        Particles::Positions(xs) => xs.iter().map(|&x| node_interp(b, d, x)).sum(),
                        Particles::Types(_) => f64::NAN,
                    })
                });
            })?;
            Ok((out, end.censored))
        });
    }
    Err(Error::Domain("Monte Carlo needs a particle model".into()))
}

fn score(alive: bool, censored: bool, pair: impl FnOnce() -> Option<f64>) -> f64 {
    if !alive {
        return 0.0;
    }
    match pair() {
        None => 1.0,
        // A censored population is so large that `e^{−⟨b,X⟩}` vanishes.
        Some(_) if censored => 0.0,
        Some(v) => (-v).exp(),
    }
}

/// `φ` at the model's states and the starting value `φ(x₀)`.
fn spine_phi(model: &Model, start: &Start) -> Result<(Vec<f64>, f64)> {
    if model.as_gw().is_some() {
        let triplet = eigen_triplet(&generator_l(model))?;
        let Start::Type(i) = *start else {
            return Err(Error::Domain("spine runs start from a single particle".into()));
        };
        if i >= triplet.dim() {
            return Err(Error::Domain(format!("type {i} out of range")));
        }
        let p0 = triplet.phi[i];
        return Ok((triplet.phi, p0));
    }
    if let Some(dm) = diffusion_of(model) {
        let Start::Position(x0) = *start else {
            return Err(Error::Domain("a diffusion needs a starting position".into()));
        };
        let grid = dm.grid(crate::models::GridCriticality::Discrete);
        return Ok((grid.nodes.iter().map(|&x| dm.phi(x)).collect(), dm.phi(x0)));
    }
    Err(Error::Domain("spine runs need a particle model".into()))
}

/// Largest `λ` for the conditional tables: `e^{−λ φ(ξ)}` must be negligible
/// for all relevant spine states.
fn lambda_max(model: &Model, phi: &[f64]) -> f64 {
    match model {
        Model::Diffusion(_) => 1e6,
        _ => 40.0 / phi.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// Spine scores `φ(x₀)·Q` with `Q = E^φ[e^{−⟨b, X_t⟩}/Y_t | ·]`.
fn spine_scores(
    model: &Model,
    start: &Start,
    t_grid: &[f64],
    mode: SpineMode,
    cfg: &McConfig,
    base: Option<&[f64]>,
) -> Result<Scores> {
    let (phi, phi0) = spine_phi(model, start)?;
    let t_max = *t_grid.last().expect("non-empty");
    if mode == SpineMode::Full {
        let g = gw_of(model).ok_or_else(|| Error::Domain("full spine mode needs a GW model".into()))?;
        let Start::Type(x0) = *start else { unreachable!("checked by spine_phi") };
        return run_replicas(cfg.n_reps, cfg.seed, cfg.threads, |_, rng| {
            let st = simulate_spine(g, &phi, x0, t_grid, cfg.cap, rng)?;
            let out = (0..t_grid.len())
                .map(|k| {
                    if st.censored && k + 1 >= st.y.len() {
                        return 0.0;
                    }
                    let e = base.map_or(0.0, |b| {
                        b[st.spine[k]] + st.side_counts[k].iter().zip(b).map(|(c, v)| *c as f64 * v).sum::<f64>()
                    });
                    phi0 * (-e).exp() / st.y[k]
                })
                .collect();
            Ok((out, st.censored))
        });
    }
    let zeros = vec![0.0; phi.len()];
    let b = base.unwrap_or(&zeros);
    let tables = LaplaceTables::build(model, &phi, b, t_max, lambda_max(model, &phi), cfg.table_dt)?;
    let phi_at = |at: SpineAt| match (at, model) {
        (SpineAt::Type(j), _) => phi[j],
        (SpineAt::Position(x), Model::Diffusion(dm)) => dm.phi(x),
        _ => f64::NAN,
    };
    run_replicas(cfg.n_reps, cfg.seed, cfg.threads, |_, rng| {
        let sk = match (model, start) {
            (Model::Diffusion(dm), Start::Position(x0)) => diffusion_skeleton(dm, *x0, t_grid, rng)?,
            (_, Start::Type(x0)) => gw_skeleton(gw_of(model).expect("GW model"), &phi, *x0, t_grid, rng)?,
            _ => return Err(Error::Domain("start does not match the model".into())),
        };
        let out = (0..t_grid.len())
            .map(|k| if t_grid[k] == 0.0 && base.is_none() { 1.0 } else { phi0 * conditional_weight(&tables, &sk, k, phi_at) })
            .collect();
        Ok((out, false))
    })
}

/// Conditional Laplace functional `E[e^{−θ s ⟨f, X_t⟩} | X_t ≠ 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceRow {
    pub theta: f64,
    pub lf: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Conditional Laplace functional at time `t` for each `θ`, with base
/// `b = θ·scale·f`. `f` is per type for a GW model and per interior grid
/// node for a diffusion. Spine estimates are ratio estimators on a common
/// set of skeletons with delta-method intervals.
pub fn conditional_laplace(
    model: &Model,
    start: &Start,
    t: f64,
    f: &[f64],
    thetas: &[f64],
    scale: f64,
    method: Method,
    cfg: &McConfig,
) -> Result<Vec<LaplaceRow>> {
    if !(t > 0.0) {
        return Err(Error::Domain("conditional Laplace functional needs t > 0".into()));
    }
    if cfg.n_reps < MIN_REPLICAS {
        return Err(Error::InsufficientReplicas(format!("{} replicas, need at least {MIN_REPLICAS}", cfg.n_reps)));
    }
    let grid = [t];
    let run = |base: Option<&[f64]>| match method {
        Method::Direct => direct_scores(model, start, &grid, cfg, base),
        Method::Spine(mode) => spine_scores(model, start, &grid, mode, cfg, base),
    };
    let denom: Vec<f64> = run(None)?.results.into_iter().map(|r| r.0[0]).collect();
    let mut rows = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let base: Vec<f64> = f.iter().map(|v| theta * scale * v).collect();
        let num: Vec<f64> = run(Some(&base))?.results.into_iter().map(|r| r.0[0]).collect();
        let (r, se) = ratio_estimate(&num, &denom)?;
        rows.push(LaplaceRow { theta, lf: r, stderr: se, ci_lo: r - Z95 * se, ci_hi: r + Z95 * se });
    }
    Ok(rows)
}

/// `mean(a)/mean(b)` with its delta-method standard error.
pub fn ratio_estimate(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    if !(mb > 0.0) {
        return Err(Error::InsufficientReplicas("no surviving replica".into()));
    }
    let r = ma / mb;
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let e = (x - ma) - r * (y - mb);
        s += e * e;
    }
    let var = s / (n - 1.0) / (n * mb * mb);
    Ok((r, var.sqrt()))
}
