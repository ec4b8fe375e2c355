//! Deterministic solvers for `u_t`, `V_t` and `a_t`.
//!
//! The mild equations `u_t[g] = T_t[1−g] − ∫ T_{t−s}[A[u_s]] ds` and their
//! superprocess analogue are integrated in differential form
//! `u' = L u − A[u]` (resp. `V' = L V − J[V]`) with fixed-step RK4.

pub mod oracle;
mod system;
mod yaglom;

pub use system::Rhs;
pub use yaglom::{yaglom_ratio, yaglom_ratios, YaglomPoint};

use crate::error::{Error, Result};
use crate::models::{Model, StableCSBP};
use crate::quad::adaptive_simpson;
use crate::spectral::EigenTriplet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    U,
    V,
    AScalar,
}

/// Solution values on a time grid, one row of `dim` values per time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub times: Vec<f64>,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    fn new(kind: TrajectoryKind, dim: usize) -> Self {
        Trajectory {
            kind,
            times: Vec::new(),
            dim,
            data: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, v: &[f64]) {
        self.times.push(t);
        self.data.extend_from_slice(v);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.data[k * self.dim + j]).collect()
    }

    /// Row recorded at time `t` (to within `1e-9`).
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|k| self.value(k))
    }
}

/// Which times to keep.
#[derive(Clone, Copy, Debug)]
pub enum Record<'a> {
    /// Every `n`-th step, plus the initial and final rows.
    Every(usize),
    /// Exactly these times; steps are shortened to land on them.
    At(&'a [f64]),
}

/// Fixed RK4 step count covering `[t0, t1]` with steps no longer than `dt`.
fn steps_for(t0: f64, t1: f64, dt: f64) -> usize {
    (((t1 - t0) / dt) - 1e-9).ceil().max(1.0) as usize
}

fn check_dt(dt: f64, horizon: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt = {dt} must be positive")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon = {horizon} must be non-negative")));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Bounds {
    Unit,
    NonNegative,
}

fn enforce(u: &mut [f64], t: f64, bounds: Bounds) -> Result<()> {
    // RK4 is not monotone, so rough data such as `u_0 = 1` next to a
    // killing boundary can overshoot slightly before smoothing out.
    const UNIT_SLACK: f64 = 1e-6;
    const SLACK: f64 = 1e-9;
    for v in u.iter_mut() {
        let ok = match bounds {
            Bounds::Unit => *v >= -UNIT_SLACK && *v <= 1.0 + UNIT_SLACK,
            Bounds::NonNegative => *v >= -SLACK * v.abs().max(1.0) && v.is_finite(),
        };
        if !ok {
            return Err(Error::StepSize { t, value: *v });
        }
        *v = match bounds {
            Bounds::Unit => v.clamp(0.0, 1.0),
            Bounds::NonNegative => v.max(0.0),
        };
    }
    Ok(())
}

/// Integrate `x' = rhs(x)` and hand every recorded row to `keep`.
fn integrate(
    rhs: &Rhs,
    x0: &[f64],
    t_start: f64,
    horizon: f64,
    dt: f64,
    record: Record,
    bounds: Bounds,
    mut keep: impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<Vec<f64>> {
    check_dt(dt, horizon)?;
    let dt = dt.min(rhs.max_stable_step());
    let mut x = x0.to_vec();
    let mut stepper = rhs.stepper();
    let mut t = t_start;
    match record {
        Record::Every(stride) => {
            let stride = stride.max(1);
            keep(t, &x)?;
            if horizon > t_start {
                let n = steps_for(t_start, horizon, dt);
                let h = (horizon - t_start) / n as f64;
                for k in 1..=n {
                    stepper.step(rhs, &mut x, h)?;
                    t = t_start + k as f64 * h;
                    enforce(&mut x[..rhs.state_len()], t, bounds)?;
                    if k % stride == 0 || k == n {
                        keep(t, &x)?;
                    }
                }
            }
        }
        Record::At(times) => {
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Domain("record times must be increasing".into()));
            }
            for &target in times {
                if target < t_start - 1e-12 {
                    return Err(Error::Domain(format!("record time {target} precedes the start")));
                }
                if target > t {
                    let n = steps_for(t, target, dt);
                    let h = (target - t) / n as f64;
                    let base = t;
                    for k in 1..=n {
                        stepper.step(rhs, &mut x, h)?;
                        let now = base + k as f64 * h;
                        enforce(&mut x[..rhs.state_len()], now, bounds)?;
                    }
                    t = target;
                }
                keep(target, &x)?;
            }
        }
    }
    Ok(x)
}

/// `u_t[g]` from `u_0 = 1 − g`, recording every step.
pub fn solve_u(model: &Model, g: &[f64], horizon: f64, dt: f64) -> Result<Trajectory> {
    if g.len() != model.dim() || g.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
        return Err(Error::Domain("g must map every type into [0, 1]".into()));
    }
    let u0: Vec<f64> = g.iter().map(|v| 1.0 - v).collect();
    solve_u_from(model, &u0, horizon, dt, Record::Every(1))
}

/// `u_t` from a given `u_0 ∈ [0, 1]`; useful when `1 − g` is known more
/// precisely than `g`.
pub fn solve_u_from(model: &Model, u0: &[f64], horizon: f64, dt: f64, record: Record) -> Result<Trajectory> {
    if model.is_superprocess() {
        return Err(Error::Domain("solve_u is for particle systems; use solve_v".into()));
    }
    if u0.len() != model.dim() || u0.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
        return Err(Error::Domain("u_0 must lie in [0, 1]".into()));
    }
    let rhs = Rhs::new(model)?;
    let mut tr = Trajectory::new(TrajectoryKind::U, u0.len());
    integrate(&rhs, u0, 0.0, horizon, dt, record, Bounds::Unit, |t, v| {
        tr.push(t, v);
        Ok(())
    })?;
    Ok(tr)
}

/// `a_t` together with the underlying survival trajectory.
#[derive(Clone, Debug)]
pub struct AtSolution {
    pub a: Trajectory,
    pub u: Trajectory,
    /// Largest gap between `⟨u_t, φ̃⟩` and `⟨1, φ̃⟩ − ∫_0^t ⟨A[u_s], φ̃⟩ ds`.
    pub max_gap: f64,
}

pub const CROSS_CHECK_TOL: f64 = 1e-6;

/// `a_t = ⟨u_t[0], φ̃⟩`, recorded every step.
pub fn solve_at(model: &Model, triplet: &EigenTriplet, horizon: f64, dt: f64) -> Result<Trajectory> {
    Ok(solve_at_with(model, triplet, horizon, dt, Record::Every(1))?.a)
}

/// `a_t` and `u_t` with the integral identity integrated alongside as an
/// extra ODE component; a gap above `1e-6` is reported as an error.
pub fn solve_at_with(
    model: &Model,
    triplet: &EigenTriplet,
    horizon: f64,
    dt: f64,
    record: Record,
) -> Result<AtSolution> {
    if model.is_superprocess() {
        return Err(Error::Domain("solve_at is for particle systems; use solve_v".into()));
    }
    let n = model.dim();
    let rhs = Rhs::new(model)?.with_mass_integral(triplet.phi_tilde.clone());
    let mut x0 = vec![1.0; n + 1];
    x0[n] = triplet.phi_tilde.iter().sum();
    let mut u = Trajectory::new(TrajectoryKind::U, n);
    let mut a = Trajectory::new(TrajectoryKind::AScalar, 1);
    let mut max_gap = 0.0f64;
    integrate(&rhs, &x0, 0.0, horizon, dt, record, Bounds::Unit, |t, v| {
        let at = triplet.pair_with_phi_tilde(&v[..n]);
        let gap = (at - v[n]).abs();
        max_gap = max_gap.max(gap);
        if gap > CROSS_CHECK_TOL {
            return Err(Error::Domain(format!(
                "a_t cross-check failed at t = {t}: ⟨u_t, φ̃⟩ = {at}, integral form = {}",
                v[n]
            )));
        }
        u.push(t, &v[..n]);
        a.push(t, &[at]);
        Ok(())
    })?;
    Ok(AtSolution { a, u, max_gap })
}

/// Stable CSBP flow: closed form `V_t(θ) = (θ^{-α} + ακt)^{-1/α}`.
pub fn solve_v_csbp(mech: &StableCSBP, theta: f64, t: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!("theta = {theta} must be non-negative")));
    }
    if theta.is_infinite() && !(t > 0.0) {
        return Err(Error::Domain("V_t(∞) needs t > 0".into()));
    }
    if t < 0.0 {
        return Err(Error::Domain(format!("t = {t} is negative")));
    }
    Ok(oracle::stable_v(mech.kappa, mech.alpha.get(), theta, t))
}

/// General one-type flow `dV/dt = −ψ(V)` through Grey's relation
/// `∫_V^θ dλ/ψ(λ) = t`, solved by bisection in `ln V`.
pub fn solve_v_scalar(psi: impl Fn(f64) -> f64, theta: f64, t: f64) -> Result<f64> {
    if !(theta > 0.0) || t < 0.0 {
        return Err(Error::Domain("need theta > 0 and t ≥ 0".into()));
    }
    if theta.is_infinite() && t == 0.0 {
        return Err(Error::Domain("V_t(∞) needs t > 0".into()));
    }
    if t == 0.0 {
        return Ok(theta);
    }
    // I(V) = ∫_{ln V}^{ln θ} e^w / ψ(e^w) dw.
    let integrand = |w: f64| {
        let l = w.exp();
        l / psi(l)
    };
    let time_from = |v: f64| -> Result<f64> {
        let lo = v.ln();
        let mut total = 0.0;
        let mut w = lo;
        loop {
            let top = if theta.is_finite() { theta.ln().min(w + 5.0) } else { w + 5.0 };
            if top <= w {
                break;
            }
            let piece = adaptive_simpson(integrand, w, top, 1e-13 * (1.0 + total))?;
            total += piece;
            w = top;
            if theta.is_infinite() && (piece < 1e-15 * total || w > 700.0) {
                break;
            }
            if theta.is_finite() && w >= theta.ln() {
                break;
            }
        }
        Ok(total)
    };
    let mut hi = if theta.is_finite() { theta } else { 1.0 };
    while theta.is_infinite() && time_from(hi)? > t {
        hi *= 16.0;
    }
    let mut lo = hi / 2.0;
    while time_from(lo)? < t {
        lo /= 16.0;
        if lo < 1e-300 {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: t,
            });
        }
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if time_from(m.exp())? > t {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Initial data for `V`.
#[derive(Clone, Debug, PartialEq)]
pub enum VInit {
    Finite(Vec<f64>),
    /// `f = +∞`, a start from the singular survival condition.
    Infinite,
}

#[derive(Clone, Debug)]
pub struct VSolution {
    pub v: Trajectory,
    /// `a_t = ⟨V_t, φ̃⟩` when a triplet was supplied.
    pub a: Option<Trajectory>,
    /// θ finally used for an infinite start.
    pub theta_used: Option<f64>,
}

const SINGULAR_TOL: f64 = 1e-8;
const THETA_LADDER: [f64; 5] = [1e8, 1e16, 1e32, 1e64, 1e128];

/// `V_t[f]` for a superprocess by RK4, from `t0` when `f = ∞`.
pub fn solve_v_multitype(
    model: &Model,
    triplet: Option<&EigenTriplet>,
    init: &VInit,
    horizon: f64,
    dt: f64,
    t0: f64,
    record: Record,
) -> Result<VSolution> {
    if !model.is_superprocess() {
        return Err(Error::Domain("solve_v needs a superprocess model".into()));
    }
    let n = model.dim();
    let rhs = Rhs::new(model)?;
    let (start, x0, theta_used) = match init {
        VInit::Finite(f) => {
            if f.len() != n || f.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Domain("initial data must be finite and non-negative".into()));
            }
            (0.0, f.clone(), None)
        }
        VInit::Infinite => {
            if !(t0 > 0.0) || t0 > horizon {
                return Err(Error::Domain(format!("t0 = {t0} must lie in (0, horizon]")));
            }
            let (v, theta) = singular_start(&rhs, n, t0)?;
            (t0, v, Some(theta))
        }
    };
    let mut v = Trajectory::new(TrajectoryKind::V, n);
    let mut a = triplet.map(|_| Trajectory::new(TrajectoryKind::AScalar, 1));
    integrate(&rhs, &x0, start, horizon, dt, record, Bounds::NonNegative, |t, row| {
        v.push(t, row);
        if let (Some(a), Some(tr)) = (a.as_mut(), triplet) {
            a.push(t, &[tr.pair_with_phi_tilde(row)]);
        }
        Ok(())
    })?;
    Ok(VSolution { v, a, theta_used })
}

/// `V_{t0}` from `θ·1` with rate-limited steps, escalating θ until `V` no
/// longer depends on it.
fn singular_start(rhs: &Rhs, n: usize, t0: f64) -> Result<(Vec<f64>, f64)> {
    let mut gap = f64::INFINITY;
    for &theta in &THETA_LADDER {
        let a = flow_from_large(rhs, n, theta, t0)?;
        let b = flow_from_large(rhs, n, 10.0 * theta, t0)?;
        gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if gap <= SINGULAR_TOL {
            return Ok((b, 10.0 * theta));
        }
    }
    Err(Error::SingularStart { t0, gap })
}

fn flow_from_large(rhs: &Rhs, n: usize, theta: f64, t0: f64) -> Result<Vec<f64>> {
    let mut x = vec![theta; n];
    let mut stepper = rhs.stepper();
    let mut d = vec![0.0; n];
    let mut t = 0.0;
    let mut h_prev = f64::INFINITY;
    while t < t0 {
        rhs.eval(&x, &mut d)?;
        let rate = x
            .iter()
            .zip(&d)
            .map(|(v, dv)| if *v > 0.0 { dv.abs() / v } else { 0.0 })
            .fold(0.0, f64::max);
        let limit = if rate > 0.0 { 0.02 / rate } else { t0 };
        let h = limit.min(1.1 * h_prev);
        h_prev = h;
        let step = h.min(t0 - t);
        stepper.step(rhs, &mut x, step)?;
        enforce(&mut x, t + step, Bounds::NonNegative)?;
        t += step;
        if t0 - t < 1e-15 * t0 {
            break;
        }
    }
    Ok(x)
}
