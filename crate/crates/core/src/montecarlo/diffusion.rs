//! Direct simulation of the branching Brownian motion killed outside
//! `(0, d)`.
//!
//! Particles are advanced lazily: a position is only updated when its
//! branching clock rings or at an observation time. Killing inside each
//! Brownian increment is decided exactly from the bridge survival
//! probability, so no boundary bias is introduced by the step size.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::population::{Particles, PopulationState};
use crate::error::{Error, Result};
use crate::models::BranchingDiffusion1D;

/// Probability that a Brownian bridge from `x` to `y` over time `h` stays in
/// `(0, d)`, from the method of images.
pub fn bridge_stay(x: f64, y: f64, h: f64, d: f64) -> f64 {
    if !(x > 0.0 && x < d && y > 0.0 && y < d) {
        return 0.0;
    }
    let kmax = 1 + (2.0 * h.sqrt() / d).ceil() as i64;
    let mut p = 0.0;
    for k in -kmax..=kmax {
        let kd = k as f64 * d;
        p += (-2.0 * kd * (kd + y - x) / h).exp() - (-2.0 * (x + kd) * (y + kd) / h).exp();
    }
    p.clamp(0.0, 1.0)
}

#[derive(Clone, Copy)]
struct Walker {
    x: f64,
    t: f64,
}

/// Move a particle to time `now`; `None` if it was killed on the way.
fn advance<R: Rng + ?Sized>(w: Walker, now: f64, d: f64, dt: f64, rng: &mut R) -> Option<f64> {
    let mut x = w.x;
    let mut t = w.t;
    while t < now {
        let h = (now - t).min(dt);
        let z: f64 = StandardNormal.sample(rng);
        let y = x + h.sqrt() * z;
        if rng.random::<f64>() >= bridge_stay(x, y, h, d) {
            return None;
        }
        x = y;
        t += h;
    }
    Some(x)
}

/// Simulate from particles at `init` positions and report the state at each
/// time in `times`. `dt` is the largest Brownian increment; any value is
/// unbiased, smaller values only cost time.
pub fn simulate_branching_diffusion_observed<R: Rng + ?Sized>(
    model: &BranchingDiffusion1D,
    init: &[f64],
    times: &[f64],
    dt: f64,
    cap: u64,
    rng: &mut R,
    mut observe: impl FnMut(usize, &PopulationState),
) -> Result<PopulationState> {
    let d = model.d();
    if init.iter().any(|x| !(*x > 0.0 && *x < d)) {
        return Err(Error::Domain(format!("starting points must lie in (0, {d})")));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain("dt must be positive".into()));
    }
    let beta = model.beta();
    let mut ps: Vec<Walker> = init.iter().map(|&x| Walker { x, t: 0.0 }).collect();
    let mut t = 0.0;
    let mut next = 0;
    let mut extinct_at = None;
    let mut censored = false;
    let snapshot = |ps: &[Walker], time: f64, ext: Option<f64>, cens: bool| PopulationState {
        particles: Particles::Positions(ps.iter().map(|w| w.x).collect()),
        time,
        extinction_time: ext,
        censored: cens,
    };
    while next < times.len() {
        if ps.is_empty() {
            let ext = *extinct_at.get_or_insert(t);
            while next < times.len() {
                observe(next, &snapshot(&ps, times[next], Some(ext), false));
                next += 1;
            }
            break;
        }
        if ps.len() as u64 > cap {
            censored = true;
            while next < times.len() {
                observe(next, &snapshot(&ps, times[next], None, true));
                next += 1;
            }
            break;
        }
        let e: f64 = Exp1.sample(rng);
        let tau = e / (beta * ps.len() as f64);
        if t + tau > times[next] {
            let obs = times[next];
            let mut i = 0;
            while i < ps.len() {
                match advance(ps[i], obs, d, dt, rng) {
                    Some(x) => {
                        ps[i] = Walker { x, t: obs };
                        i += 1;
                    }
                    None => {
                        ps.swap_remove(i);
                    }
                }
            }
            t = obs;
            if ps.is_empty() {
                extinct_at = Some(obs);
            }
            observe(next, &snapshot(&ps, obs, extinct_at, false));
            next += 1;
            continue;
        }
        t += tau;
        let i = rng.random_range(0..ps.len());
        match advance(ps[i], t, d, dt, rng) {
            None => {
                ps.swap_remove(i);
            }
            Some(x) => {
                let kids = model.law().sample(rng);
                if kids == 0 {
                    ps.swap_remove(i);
                } else {
                    ps[i] = Walker { x, t };
                    let add = (kids - 1).min(cap.saturating_add(1));
                    ps.extend(std::iter::repeat_n(Walker { x, t }, add as usize));
                }
            }
        }
    }
    let mut state = snapshot(&ps, times.last().copied().unwrap_or(0.0), extinct_at, censored);
    if ps.is_empty() && extinct_at.is_none() {
        state.extinction_time = Some(t);
    }
    Ok(state)
}

pub fn simulate_branching_diffusion<R: Rng + ?Sized>(
    model: &BranchingDiffusion1D,
    init: &[f64],
    t_end: f64,
    dt: f64,
    cap: u64,
    rng: &mut R,
) -> Result<PopulationState> {
    simulate_branching_diffusion_observed(model, init, &[t_end], dt, cap, rng, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_matches_single_barrier_when_far() {
        let (x, y, h): (f64, f64, f64) = (0.3, 0.4, 0.01);
        let single = 1.0 - (-2.0 * x * y / h).exp();
        assert!((bridge_stay(x, y, h, 100.0) - single).abs() < 1e-14);
    }

    #[test]
    fn bridge_is_symmetric_in_the_strip() {
        let d = 2.0;
        let a = bridge_stay(0.5, 1.2, 0.7, d);
        let b = bridge_stay(d - 0.5, d - 1.2, 0.7, d);
        assert!((a - b).abs() < 1e-13);
        assert!(a > 0.0 && a < 1.0);
    }
}
