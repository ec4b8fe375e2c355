//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::error::Error;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use critbranch::evolution::{oracle, solve_at_with, solve_u, solve_u_from, yaglom_ratios, Record};
use critbranch::models::*;
use critbranch::montecarlo::*;
use critbranch::regvar::{bruijn_conjugate, log_grid, SlowlyVarying, SlowlyVaryingAtInfinity, TailIndex};
use critbranch::spectral::{delta_profile, eigen_triplet, generator_l, EigenTriplet};
use critbranch::verify::{fit_power_law, yaglom_verdict, LaplaceData, Tolerances};
use critbranch_cli::config::McMethod;
use critbranch_cli::{replay, run, ExperimentConfig};
use rand::Rng;

type Check = Result<(bool, String), Box<dyn Error>>;
type Criterion = (&'static str, fn() -> Check);

fn tail(alpha: f64) -> TailIndex {
    TailIndex::new(alpha).unwrap()
}

fn slack_model(alpha: f64, c: f64) -> Model {
    let law = SlackOffspring::new(tail(alpha), c).unwrap();
    Model::gw(MultiTypeGW::slack_single(1.0, law).unwrap())
}

/// `D = ½·1`, `m = (1.2, 0.8)`, `β = (1, 1.5)`, so `φ = (1, 2/3)`.
fn two_type(alpha: f64) -> Model {
    let a = tail(alpha);
    let laws = vec![
        CountLaw::Slack(SlackOffspring::with_mean(a, 0.4, 1.2).unwrap()),
        CountLaw::Slack(SlackOffspring::with_mean(a, 0.35, 0.8).unwrap()),
    ];
    Model::gw(MultiTypeGW::new(vec![1.0, 1.5], laws, vec![vec![0.5, 0.5]; 2]).unwrap())
}

fn diffusion() -> BranchingDiffusion1D {
    BranchingDiffusion1D::critical(PI, 1.0, tail(0.5), 0.5, 63).unwrap()
}

fn threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn slack_survival() -> Check {
    let model = slack_model(0.5, 0.5);
    let exact = |t: f64| oracle::slack_survival(0.5, 1.0, 0.5, t);

    let clock = Instant::now();
    let tr = solve_u_from(&model, &[1.0], 1e3, 0.01, Record::At(&[1e3]))?;
    let solve_time = clock.elapsed();
    let got = tr.last()[0];
    let err = (got - exact(1e3)).abs();
    let solve_ok = err < 1e-8 && solve_time < Duration::from_secs(1);

    let times = [4.0, 8.0, 12.0, 16.0];
    let cfg = McConfig { n_reps: 100_000, seed: 1, threads: threads(), cap: 100_000, ..Default::default() };
    let clock = Instant::now();
    let table = estimate_survival(&model, &Start::Type(0), &times, Method::Direct, &cfg)?;
    let mc_time = clock.elapsed();
    let mut worst = 0.0f64;
    for row in &table.rows {
        let u = exact(row.t);
        let sigma = (u * (1.0 - u) / cfg.n_reps as f64).sqrt();
        worst = worst.max((row.p_hat - u).abs() / sigma);
    }
    let mc_ok = worst < 3.0 && mc_time < Duration::from_secs(60);
    Ok((
        solve_ok && mc_ok,
        format!(
            "|u_1000 - exact| = {err:.2e} in {}; MC worst |z| = {worst:.2} in {}",
            secs(solve_time),
            secs(mc_time)
        ),
    ))
}

fn stable_csbp() -> Check {
    let clock = Instant::now();
    let grid = log_grid(1e-2, 1e4, 2);
    let thetas = log_grid(1e-2, 1e2, 4);
    let mut worst = 0.0f64;
    for (kappa, alpha) in [(1.0, 0.5), (1.0, 1.0), (2.0, 0.7)] {
        let model = Model::StableCsbp(StableCSBP::new(kappa, tail(alpha))?);
        let tr = EigenTriplet { lambda: 0.0, phi: vec![1.0], phi_tilde: vec![1.0] };
        for &t in &grid {
            for p in yaglom_ratios(&model, &tr, &thetas, &[1.0], t, 0.01)? {
                let v = p.v_ratio.as_ref().ok_or("stable CSBP point without a V ratio")?[0];
                worst = worst.max((v - oracle::yaglom_limit(alpha, p.theta)).abs());
            }
        }
    }
    let elapsed = clock.elapsed();
    Ok((
        worst < 1e-8 && elapsed < Duration::from_secs(1),
        format!("worst |V_t[θa_t]/V_t - θ/(1+θ^α)^(1/α)| = {worst:.2e} in {}", secs(elapsed)),
    ))
}

fn two_type_kolmogorov() -> Check {
    let clock = Instant::now();
    let times = log_grid(1e2, 1e4, 10);
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0] {
        let model = two_type(alpha);
        let tr = eigen_triplet(&generator_l(&model))?;
        let sol = solve_at_with(&model, &tr, 1e4, 0.05, Record::At(&times))?;
        let a_t: Vec<f64> = (0..times.len()).map(|k| sol.a.value(k)[0]).collect();
        let fit = fit_power_law(&times, &a_t, None)?;
        let target = -1.0 / alpha;
        let slope_err = (fit.slope / target - 1.0).abs();
        let a_end = *a_t.last().unwrap();
        let u_end = sol.u.last();
        let shape_err = (0..2).map(|i| (u_end[i] / (a_end * tr.phi[i]) - 1.0).abs()).fold(0.0, f64::max);
        ok &= slope_err < 0.02 && shape_err < 0.02;
        parts.push(format!("α={alpha}: slope {:.4} vs {target}, max |u/(aφ) - 1| = {shape_err:.1e}", fit.slope));
    }
    let elapsed = clock.elapsed();
    ok &= elapsed < Duration::from_secs(30);
    Ok((ok, format!("{} in {}", parts.join("; "), secs(elapsed))))
}

fn two_type_yaglom() -> Check {
    let clock = Instant::now();
    let f = [1.0, 1.0];
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0] {
        let model = two_type(alpha);
        let tr = eigen_triplet(&generator_l(&model))?;
        let pairing = tr.pair_with_phi_tilde(&f);
        let thetas: Vec<f64> = log_grid(0.1, 10.0, 6).iter().map(|t| t / pairing).collect();
        let pts = yaglom_ratios(&model, &tr, &thetas, &f, 1e4, 0.05)?;
        let verdicts = yaglom_verdict(alpha, LaplaceData::Deterministic(&pts), Tolerances::default());
        let sup = verdicts.last().ok_or("no verdicts")?.observed;
        ok &= sup < 0.02;
        parts.push(format!("α={alpha}: sup distance {sup:.2e}"));
    }
    let elapsed = clock.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    Ok((ok, format!("{} in {}", parts.join("; "), secs(elapsed))))
}

fn spine_estimator() -> Check {
    let clock = Instant::now();
    let times = [10.0, 50.0, 100.0];
    let n = 100_000;
    let mut ok = true;
    let mut parts = Vec::new();
    let mut compared = 0;
    for alpha in [0.5, 1.0] {
        let model = two_type(alpha);
        let exact = solve_u_from(&model, &[1.0, 1.0], 100.0, 0.01, Record::At(&times))?;
        let cfg = McConfig { n_reps: n, seed: 7, threads: threads(), cap: 100_000, ..Default::default() };
        let spine = estimate_survival(&model, &Start::Type(0), &times, Method::Spine(SpineMode::Conditional), &cfg)?;
        let direct = estimate_survival(&model, &Start::Type(0), &times, Method::Direct, &cfg)?;
        for (k, (row, plain)) in spine.rows.iter().zip(&direct.rows).enumerate() {
            let u = exact.value(k)[0];
            let z = (row.p_hat - u) / row.stderr;
            ok &= z.abs() < 3.0;
            let mut line = format!("α={alpha} t={}: z={z:.2}", row.t);
            if u < 1e-2 {
                let direct_rse = plain.stderr / plain.p_hat;
                let spine_rse = row.stderr / row.p_hat;
                ok &= spine_rse < direct_rse;
                compared += 1;
                line.push_str(&format!(" rse {spine_rse:.1e} < {direct_rse:.1e}"));
            }
            parts.push(line);
        }
    }
    let elapsed = clock.elapsed();
    ok &= compared > 0 && elapsed < Duration::from_secs(300);
    Ok((ok, format!("{} in {}", parts.join("; "), secs(elapsed))))
}

fn spectral_example() -> Check {
    let half = FiniteOffspring::new(vec![0.5, 0.0, 0.5])?;
    let gw = MultiTypeGW::new(
        vec![1.0, 1.0],
        vec![CountLaw::Finite(half.clone()), CountLaw::Finite(half)],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    )?;
    let l = generator_l(&Model::gw(gw));
    let tr = eigen_triplet(&l)?;
    let triplet_err = [
        tr.lambda.abs(),
        (tr.phi[0] - 1.0).abs(),
        (tr.phi[1] - 1.0).abs(),
        (tr.phi_tilde[0] - 0.5).abs(),
        (tr.phi_tilde[1] - 0.5).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let t_grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
    let delta = delta_profile(&l, &tr, &t_grid);
    let delta_err = t_grid
        .iter()
        .zip(&delta.delta_values)
        .map(|(t, d)| (d - (-2.0 * t).exp()).abs())
        .fold(0.0, f64::max);

    // Keeping the continuum growth rate leaves λ_h = λ_1 − λ_1^h ≠ 0.
    let base = diffusion();
    let mut errors = Vec::new();
    for n in [15, 31, 63, 127] {
        let grid = base.with_grid_points(n).grid(GridCriticality::Continuum);
        let tr = eigen_triplet(&grid.generator())?;
        let scale = tr.phi.iter().cloned().fold(0.0, f64::max);
        let vec_err = grid
            .nodes
            .iter()
            .zip(&tr.phi)
            .map(|(x, p)| (p / scale - base.phi(*x)).abs())
            .fold(0.0, f64::max);
        errors.push((tr.lambda.abs(), vec_err));
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0].0 / w[1].0).log2()).collect();
    let order_ok = orders.iter().all(|p| (p - 2.0).abs() < 0.1);
    let vec_ok = errors.iter().all(|e| e.1 < 1e-8);
    Ok((
        triplet_err < 1e-10 && delta_err < 1e-10 && order_ok && vec_ok,
        format!(
            "triplet err {triplet_err:.1e}, Δ_t err {delta_err:.1e}, eigenvalue orders {:?}",
            orders.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>()
        ),
    ))
}

fn invariants() -> Check {
    let mut rng = replica_rng(2024, 0);
    let mut parts = Vec::new();

    let gw = two_type(0.5);
    let csbp = MultiTypeCSBP {
        b: vec![0.0; 2],
        c: vec![0.5, 0.0],
        nu: vec![LevyKernel::Zero, LevyKernel::Stable { kappa: 1.0, alpha: 0.6 }],
        beta: vec![1.0; 2],
        gamma_tilde: vec![1.0; 2],
        jump: vec![LevyKernel::Zero, LevyKernel::Zero],
        pi: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    };
    let csbp = Model::MultiTypeCsbp(csbp);
    let mut violations = 0;
    for _ in 0..1000 {
        let lo: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + (1.0 - v) * rng.random::<f64>()).collect();
        let (a_lo, a_hi) = (eval_a(&gw, &lo)?, eval_a(&gw, &hi)?);
        let scale = 10.0 * rng.random::<f64>();
        let h_lo: Vec<f64> = lo.iter().map(|v| scale * v).collect();
        let h_hi: Vec<f64> = hi.iter().map(|v| scale * v).collect();
        let (j_lo, j_hi) = (eval_j(&csbp, &h_lo)?, eval_j(&csbp, &h_hi)?);
        violations += (0..2).filter(|&i| a_lo[i] > a_hi[i] || j_lo[i] > j_hi[i]).count();
    }
    parts.push(format!("A/J monotonicity violations {violations}"));
    let mono_ok = violations == 0;

    let mut pmf_worst = 0.0f64;
    let mut pmf_negative = false;
    let mut laws = 0;
    for alpha in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
        for frac in [0.1, 0.5, 0.9, 1.0] {
            for mean in [None, Some(0.0), Some(0.5), Some(1.0)] {
                let c = frac / (1.0 + alpha);
                let critical = mean.is_none();
                // `mean` sweeps `[c(1+α), 1+c]` for the general constructor.
                let m = mean.map_or(1.0, |w| c * (1.0 + alpha) + w * (1.0 + c - c * (1.0 + alpha)));
                let law = if critical {
                    SlackOffspring::new(tail(alpha), c)?
                } else {
                    SlackOffspring::with_mean(tail(alpha), c, m)?
                };
                pmf_negative |= law.table().iter().any(|p| *p < 0.0) || law.tail_mass() < 0.0;
                let mass: f64 = law.table().iter().sum::<f64>() + law.tail_mass();
                let first: f64 = law.table().iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                pmf_worst = pmf_worst.max((mass - 1.0).abs()).max((first + law.tail_mean() - m).abs() / m);
                laws += 1;
            }
        }
    }
    parts.push(format!("{laws} Slack laws, worst mass/mean error {pmf_worst:.1e}"));
    let pmf_ok = !pmf_negative && pmf_worst < 1e-9;

    let mut semigroup = 0.0f64;
    for model in [two_type(0.5), two_type(1.0)] {
        let g = [0.3, 0.8];
        let (s, t) = (3.0, 5.0);
        // Different step sizes, so the two paths share no RK4 steps.
        let full = solve_u(&model, &g, s + t, 1e-3)?;
        let first = solve_u(&model, &g, s, 7e-4)?;
        let rest = solve_u_from(&model, first.last(), t, 1.3e-3, Record::At(&[t]))?;
        for i in 0..2 {
            semigroup = semigroup.max((full.last()[i] - rest.last()[i]).abs());
        }
    }
    parts.push(format!("semigroup gap {semigroup:.1e}"));
    let semigroup_ok = semigroup < 1e-7;

    let grid = log_grid(10.0, 1e12, 4);
    let mut bruijn = 0.0f64;
    for l in [
        SlowlyVaryingAtInfinity::LogPower { c: 1.0, p: 0.5 },
        SlowlyVaryingAtInfinity::LogPower { c: 2.0, p: -1.0 },
        SlowlyVaryingAtInfinity::FromZero { alpha: tail(0.5), ell: SlowlyVarying::constant(0.5) },
    ] {
        bruijn = bruijn.max(bruijn_conjugate(&l, &grid, 1e-10, 500)?.max_residual);
    }
    parts.push(format!("Bruijn residual {bruijn:.1e}"));
    let bruijn_ok = bruijn < 1e-8;

    let cfg = ExperimentConfig::from_toml(
        r#"
        task = "simulate"
        [model]
        type = "multitype_gw"
        beta = [1.0, 1.5]
        displacement = [[0.5, 0.5], [0.5, 0.5]]
        offspring = [
            { type = "slack", alpha = 0.5, c = 0.4, mean = 1.2 },
            { type = "slack", alpha = 0.5, c = 0.35, mean = 0.8 },
        ]
        [numeric]
        horizon = 20.0
        t_grid = [5.0, 10.0, 20.0]
        n_reps = 2000
        cap = 10000
        [rng]
        seed = 99
        threads = 1
        "#,
    )?;
    let mut replay_ok = true;
    for method in [McMethod::Direct, McMethod::Spine] {
        let mut cfg = cfg.clone();
        cfg.numeric.method = method;
        let record = run(&cfg, None)?;
        for t in [1, 4, 16] {
            replay_ok &= replay(&record, Some(t)).is_ok();
        }
    }
    parts.push(format!("replay across 1/4/16 threads {}", if replay_ok { "identical" } else { "MISMATCH" }));

    Ok((mono_ok && pmf_ok && semigroup_ok && bruijn_ok && replay_ok, parts.join("; ")))
}

fn branching_diffusion() -> Check {
    let clock = Instant::now();
    let dm = diffusion();
    let d = dm.d();
    let model = Model::Diffusion(dm.clone());

    let times = log_grid(50.0, 500.0, 5);
    let cfg = McConfig { n_reps: 100_000, seed: 5, threads: threads(), table_dt: 0.01, ..Default::default() };
    let spine = estimate_survival(&model, &Start::Position(d / 2.0), &times, Method::Spine(SpineMode::Conditional), &cfg)?;
    let p: Vec<f64> = spine.rows.iter().map(|r| r.p_hat).collect();
    let fit = fit_power_law(&times, &p, None)?;
    let exponent_err = (fit.slope / -2.0 - 1.0).abs();

    let starts: Vec<f64> = (1..10).map(|k| k as f64 * d / 10.0).collect();
    let mut profile = Vec::new();
    for (k, &x) in starts.iter().enumerate() {
        let cfg = McConfig { n_reps: 20_000, seed: 100 + k as u64, threads: threads(), cap: 10_000, ..Default::default() };
        let row = estimate_survival(&model, &Start::Position(x), &[10.0], Method::Direct, &cfg)?;
        profile.push(row.rows[0].p_hat);
    }
    let shape: Vec<f64> = starts.iter().map(|&x| dm.phi(x)).collect();
    let rho = correlation(&profile, &shape);
    let elapsed = clock.elapsed();
    Ok((
        exponent_err < 0.1 && rho > 0.99 && elapsed < Duration::from_secs(900),
        format!("survival exponent {:.3} vs -2, profile correlation {rho:.4} in {}", fit.slope, secs(elapsed)),
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("slack survival closed form and simulation", slack_survival),
        ("stable CSBP Yaglom ratio", stable_csbp),
        ("two-type survival rate and shape", two_type_kolmogorov),
        ("two-type Yaglom limit", two_type_yaglom),
        ("spine survival estimator", spine_estimator),
        ("spectral example and grid convergence", spectral_example),
        ("invariant suite", invariants),
        ("branching diffusion", branching_diffusion),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("criterion {} [{name}]: {} - {detail}", k + 1, if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(k + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
