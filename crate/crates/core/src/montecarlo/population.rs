use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};

use crate::error::{Error, Result};
use crate::models::MultiTypeGW;

/// Default population cap above which a replica is censored.
pub const DEFAULT_CAP: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum Particles {
    /// Count per type.
    Types(Vec<u64>),
    /// Positions of individual particles.
    Positions(Vec<f64>),
}

/// A finite particle configuration at a given time.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationState {
    pub particles: Particles,
    pub time: f64,
    pub extinction_time: Option<f64>,
    /// Set when the population exceeded its cap; the state is then frozen.
    pub censored: bool,
}

impl PopulationState {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let extinct = counts.iter().all(|&c| c == 0);
        PopulationState {
            particles: Particles::Types(counts),
            time: 0.0,
            extinction_time: extinct.then_some(0.0),
            censored: false,
        }
    }

    pub fn single(n_types: usize, ty: usize) -> Self {
        let mut counts = vec![0; n_types];
        counts[ty] = 1;
        Self::from_counts(counts)
    }

    pub fn from_positions(xs: Vec<f64>) -> Self {
        let extinct = xs.is_empty();
        PopulationState {
            particles: Particles::Positions(xs),
            time: 0.0,
            extinction_time: extinct.then_some(0.0),
            censored: false,
        }
    }

    pub fn total(&self) -> u64 {
        match &self.particles {
            Particles::Types(c) => c.iter().sum(),
            Particles::Positions(x) => x.len() as u64,
        }
    }

    pub fn is_extinct(&self) -> bool {
        !self.censored && self.total() == 0
    }

    /// Alive for survival purposes; censored replicas count as survivors.
    pub fn is_alive(&self) -> bool {
        self.censored || self.total() > 0
    }

    /// `⟨f, X⟩` for a function on types.
    pub fn pair(&self, f: &[f64]) -> f64 {
        match &self.particles {
            Particles::Types(c) => c.iter().zip(f).map(|(n, v)| *n as f64 * v).sum(),
            Particles::Positions(_) => f64::NAN,
        }
    }
}

/// Gillespie simulation of a multi-type GW process to `t_end`.
pub fn simulate_bmp<R: Rng + ?Sized>(
    model: &MultiTypeGW,
    init: PopulationState,
    t_end: f64,
    cap: u64,
    rng: &mut R,
) -> Result<PopulationState> {
    let mut last = None;
    simulate_bmp_observed(model, init, &[t_end], cap, rng, |_, s| last = Some(s.clone()))?;
    Ok(last.expect("one observation"))
}

/// Gillespie simulation reporting the state at every time in `times`.
pub fn simulate_bmp_observed<R: Rng + ?Sized>(
    model: &MultiTypeGW,
    mut state: PopulationState,
    times: &[f64],
    cap: u64,
    rng: &mut R,
    mut observe: impl FnMut(usize, &PopulationState),
) -> Result<PopulationState> {
    let n = model.n_types();
    let counts = match &mut state.particles {
        Particles::Types(c) if c.len() == n => c,
        _ => return Err(Error::Domain("initial state must hold one count per type".into())),
    };
    let beta = model.beta();
    let mut t = state.time;
    let mut next = 0;
    let mut emit = |k: usize, counts: &Vec<u64>, time: f64, ext: Option<f64>, cens: bool| {
        observe(
            k,
            &PopulationState {
                particles: Particles::Types(counts.clone()),
                time,
                extinction_time: ext,
                censored: cens,
            },
        );
    };
    loop {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            let ext = state.extinction_time.unwrap_or(t);
            state.extinction_time = Some(ext);
            while next < times.len() {
                emit(next, counts, times[next], Some(ext), false);
                next += 1;
            }
            break;
        }
        if total > cap {
            state.censored = true;
            while next < times.len() {
                emit(next, counts, times[next], None, true);
                next += 1;
            }
            break;
        }
        let rate: f64 = counts.iter().zip(beta).map(|(c, b)| *c as f64 * b).sum();
        let e: f64 = Exp1.sample(rng);
        let tau = e / rate;
        while next < times.len() && t + tau > times[next] {
            emit(next, counts, times[next], None, false);
            next += 1;
        }
        if next == times.len() {
            break;
        }
        t += tau;
        // Parent type ∝ n_i β_i.
        let mut pick = rng.random::<f64>() * rate;
        let mut i = 0;
        while i + 1 < n {
            let w = counts[i] as f64 * beta[i];
            if pick < w && counts[i] > 0 {
                break;
            }
            pick -= w;
            i += 1;
        }
        while counts[i] == 0 {
            i -= 1;
        }
        counts[i] -= 1;
        let kids = model.laws()[i].sample(rng);
        place_children(&model.displacement()[i], kids, counts, rng);
    }
    state.time = times.last().copied().unwrap_or(t);
    Ok(state)
}

/// Add `kids` children with types iid from `row`.
pub(crate) fn place_children<R: Rng + ?Sized>(row: &[f64], kids: u64, counts: &mut [u64], rng: &mut R) {
    if kids == 0 {
        return;
    }
    if row.len() == 1 {
        counts[0] += kids;
        return;
    }
    if kids <= 32 {
        for _ in 0..kids {
            counts[categorical(row, rng)] += 1;
        }
        return;
    }
    // Multinomial by successive binomial splits.
    let mut left = kids;
    let mut mass = 1.0;
    for (j, &p) in row.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j + 1 == row.len() || mass <= p {
            counts[j] += left;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let take = Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(0);
        counts[j] += take;
        left -= take;
        mass -= p;
    }
}

pub(crate) fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    for (j, &w) in p.iter().enumerate() {
        if u < w {
            return j;
        }
        u -= w;
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(p.len() - 1)
}
