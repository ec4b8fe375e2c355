//! Spine decomposition under the `φ`-size-biased measure.
//!
//! Under `P^φ` a distinguished particle moves with the `φ`-transformed
//! dynamics, branches at the biased rate with size-biased offspring and, for
//! a GW model, picks its new type `∝ D_ij φ_j`. Off-spine children follow the
//! original law. Survival is then `u_t(x) = φ(x)·E^φ[1/Y_t]` with
//! `Y_t = ⟨φ, X_t⟩`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::diffusion::bridge_stay;
use super::population::{categorical, place_children};
use super::tables::LaplaceTables;
use crate::error::{Error, Result};
use crate::models::{BranchingDiffusion1D, MultiTypeGW};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpineMode {
    /// Simulate every off-spine subtree.
    Full,
    /// Integrate off-spine subtrees out against tabulated Laplace factors.
    Conditional,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpineAt {
    Type(usize),
    Position(f64),
}

/// A spine branching event with `extra` off-spine children.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpineEvent {
    pub time: f64,
    pub at: SpineAt,
    pub extra: u64,
}

/// The spine trajectory: its branching events and its state at each
/// observation time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpineSkeleton {
    pub times: Vec<f64>,
    pub events: Vec<SpineEvent>,
    pub path: Vec<SpineAt>,
}

/// Outcome of a full spine replica.
#[derive(Clone, Debug, PartialEq)]
pub struct SpineState {
    pub spine: Vec<usize>,
    /// `Y_t = ⟨φ, X_t⟩` at each observation time.
    pub y: Vec<f64>,
    pub side_counts: Vec<Vec<u64>>,
    pub censored: bool,
}

/// Biased branching rates `β_i m_i (Dφ)_i / φ_i` and new-spine-type rows.
struct SpineRates {
    rate: Vec<f64>,
    next: Vec<Vec<f64>>,
}

fn spine_rates(model: &MultiTypeGW, phi: &[f64]) -> Result<SpineRates> {
    if phi.len() != model.n_types() || phi.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Domain("φ must be strictly positive on every type".into()));
    }
    let dphi = model.displace(phi);
    let means = model.means();
    let rate = (0..phi.len()).map(|i| model.beta()[i] * means[i] * dphi[i] / phi[i]).collect();
    let next = model
        .displacement()
        .iter()
        .map(|row| row.iter().zip(phi).map(|(p, f)| p * f).collect())
        .collect();
    Ok(SpineRates { rate, next })
}

fn exp_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("observation times must be non-negative and sorted".into()));
    }
    Ok(())
}

/// Spine skeleton of a GW model started from one particle of type `x0`.
pub fn gw_skeleton<R: Rng + ?Sized>(
    model: &MultiTypeGW,
    phi: &[f64],
    x0: usize,
    times: &[f64],
    rng: &mut R,
) -> Result<SpineSkeleton> {
    check_times(times)?;
    let rates = spine_rates(model, phi)?;
    let mut ty = x0;
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut path = Vec::with_capacity(times.len());
    for &obs in times {
        loop {
            let e: f64 = Exp1.sample(rng);
            let tau = e / rates.rate[ty];
            if t + tau > obs {
                // Memoryless: the residual clock restarts after `obs`.
                t = obs;
                break;
            }
            t += tau;
            let n = model.laws()[ty].sample_size_biased(rng);
            if n > 1 {
                events.push(SpineEvent { time: t, at: SpineAt::Type(ty), extra: n - 1 });
            }
            ty = categorical(&rates.next[ty], rng);
        }
        path.push(SpineAt::Type(ty));
    }
    Ok(SpineSkeleton { times: times.to_vec(), events, path })
}

/// Longest exact spine step; longer steps lower the acceptance rate below.
const MAX_SPINE_STEP: f64 = 1.0;

/// Exact step of the `φ`-transformed killed Brownian motion: its transition
/// density is `p^kill_h(x, y)·φ(y)e^{λ₁h}/φ(x)`, so a Gaussian proposal is
/// accepted with probability `P(bridge stays inside)·φ(y)`.
fn spine_step<R: Rng + ?Sized>(x: f64, h: f64, d: f64, rng: &mut R) -> f64 {
    let k = PI / d;
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let y = x + h.sqrt() * z;
        if !(y > 0.0 && y < d) {
            continue;
        }
        if rng.random::<f64>() < bridge_stay(x, y, h, d) * (k * y).sin() {
            return y;
        }
    }
}

/// Spine of the branching diffusion: Brownian motion conditioned to stay
/// in `(0, d)` (drift `(π/d) cot(πx/d)`), sampled exactly, branching at
/// rate `βm` with size-biased offspring.
pub fn diffusion_skeleton<R: Rng + ?Sized>(
    model: &BranchingDiffusion1D,
    x0: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<SpineSkeleton> {
    check_times(times)?;
    let d = model.d();
    if !(x0 > 0.0 && x0 < d) {
        return Err(Error::Domain(format!("start {x0} outside (0, {d})")));
    }
    let rate = model.beta() * model.law().mean();
    let mut x = x0;
    let mut t = 0.0;
    let mut next_event = exp_draw(rng) / rate;
    let mut events = Vec::new();
    let mut path = Vec::with_capacity(times.len());
    for &obs in times {
        while t < obs {
            let stop = next_event.min(obs).min(t + MAX_SPINE_STEP);
            x = spine_step(x, stop - t, d, rng);
            t = stop;
            if stop == next_event {
                let n = model.law().sample_size_biased(rng);
                if n > 1 {
                    events.push(SpineEvent { time: t, at: SpineAt::Position(x), extra: n - 1 });
                }
                next_event = t + exp_draw(rng) / rate;
            }
        }
        path.push(SpineAt::Position(x));
    }
    Ok(SpineSkeleton { times: times.to_vec(), events, path })
}

/// `E^φ[e^{−⟨b, X_t⟩} / Y_t | spine]` at observation index `k`, with `b`
/// the base the tables were built for.
pub fn conditional_weight(tables: &LaplaceTables, sk: &SpineSkeleton, k: usize, phi_at: impl Fn(SpineAt) -> f64) -> f64 {
    let t = sk.times[k];
    let mut acc = vec![0.0; tables.n_lambda()];
    for ev in sk.events.iter().take_while(|e| e.time <= t) {
        let age = t - ev.time;
        let w = ev.extra as f64;
        match ev.at {
            SpineAt::Type(j) => tables.accumulate_type(&mut acc, age, j, w),
            SpineAt::Position(x) => tables.accumulate_position(&mut acc, age, x, w),
        }
    }
    let b0 = match sk.path[k] {
        SpineAt::Type(j) => tables.base_type(j),
        SpineAt::Position(x) => tables.base_position(x),
    };
    tables.integrate(&acc, b0, phi_at(sk.path[k]))
}

/// Full spine replica for a GW model: the spine and every off-spine subtree
/// are simulated jointly. A side population above `cap` censors the replica.
pub fn simulate_spine<R: Rng + ?Sized>(
    model: &MultiTypeGW,
    phi: &[f64],
    x0: usize,
    times: &[f64],
    cap: u64,
    rng: &mut R,
) -> Result<SpineState> {
    check_times(times)?;
    let rates = spine_rates(model, phi)?;
    let n = model.n_types();
    let beta = model.beta();
    let mut side = vec![0u64; n];
    let mut ty = x0;
    let mut t = 0.0;
    let mut out = SpineState { spine: Vec::new(), y: Vec::new(), side_counts: Vec::new(), censored: false };
    for &obs in times {
        while !out.censored {
            let side_rate: f64 = side.iter().zip(beta).map(|(c, b)| *c as f64 * b).sum();
            let total = side_rate + rates.rate[ty];
            let e: f64 = Exp1.sample(rng);
            let tau = e / total;
            if t + tau > obs {
                t = obs;
                break;
            }
            t += tau;
            let mut pick = rng.random::<f64>() * total;
            if pick < rates.rate[ty] {
                let kids = model.laws()[ty].sample_size_biased(rng);
                if kids > 1 {
                    place_children(&model.displacement()[ty], kids - 1, &mut side, rng);
                }
                ty = categorical(&rates.next[ty], rng);
            } else {
                pick -= rates.rate[ty];
                let mut i = 0;
                while i + 1 < n && (pick >= side[i] as f64 * beta[i] || side[i] == 0) {
                    pick -= side[i] as f64 * beta[i];
                    i += 1;
                }
                while side[i] == 0 {
                    i -= 1;
                }
                side[i] -= 1;
                let kids = model.laws()[i].sample(rng);
                place_children(&model.displacement()[i], kids, &mut side, rng);
            }
            if side.iter().sum::<u64>() > cap {
                out.censored = true;
            }
        }
        let y = phi[ty] + side.iter().zip(phi).map(|(c, p)| *c as f64 * p).sum::<f64>();
        out.spine.push(ty);
        out.y.push(y);
        out.side_counts.push(side.clone());
    }
    Ok(out)
}
