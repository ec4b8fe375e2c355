//! Offspring count laws: the Slack family with generating function
//! `h(s) = 1 − m(1−s) + c(1−s)^{1+α}` and plain finite-support laws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::{gamma, ln_gamma_ratio, KahanSum};
use crate::regvar::TailIndex;

pub const DEFAULT_K_MAX: usize = 1_000_000;

/// Largest count ever returned by the tail sampler.
const COUNT_CAP: f64 = 4.0e18;

/// Slack-type heavy-tailed law with mean `m`.
///
/// The pmf is `p_0 = 1 − m + c`, `p_1 = m − c(1+α)` and
/// `p_k = c (−1)^k binom(1+α, k)` for `k ≥ 2`, which needs
/// `c(1+α) ≤ m ≤ 1 + c`. The table stops at `k_max`; the mass and mean beyond
/// it are known in closed form and sampled exactly.
#[derive(Clone, Debug)]
pub struct SlackOffspring {
    alpha: TailIndex,
    c: f64,
    mean: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    sb_cdf: Vec<f64>,
    tail_mass: f64,
    sb_tail_mass: f64,
}

impl PartialEq for SlackOffspring {
    fn eq(&self, other: &Self) -> bool {
        self.alpha == other.alpha
            && self.c == other.c
            && self.mean == other.mean
            && self.pmf.len() == other.pmf.len()
    }
}

impl SlackOffspring {
    /// The critical law (`m = 1`); valid for `0 < c ≤ 1/(1+α)`.
    pub fn new(alpha: TailIndex, c: f64) -> Result<Self> {
        Self::with_mean(alpha, c, 1.0)
    }

    pub fn with_mean(alpha: TailIndex, c: f64, mean: f64) -> Result<Self> {
        Self::with_cutoff(alpha, c, mean, DEFAULT_K_MAX)
    }

    pub fn with_cutoff(alpha: TailIndex, c: f64, mean: f64, k_max: usize) -> Result<Self> {
        let a = alpha.get();
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("c", format!("{c} must be positive")));
        }
        if !(mean.is_finite() && mean >= c * (1.0 + a) - 1e-15 && mean <= 1.0 + c + 1e-15) {
            return Err(invalid(
                "c",
                format!("c = {c} with mean {mean} gives a negative probability (need c(1+α) ≤ m ≤ 1+c)"),
            ));
        }
        if k_max < 2 {
            return Err(invalid("k_max", "must be at least 2"));
        }
        let last = if a == 1.0 { 2 } else { k_max };
        let mut pmf = Vec::with_capacity(last + 1);
        pmf.push((1.0 - mean + c).max(0.0));
        pmf.push((mean - c * (1.0 + a)).max(0.0));
        let mut p = c * (1.0 + a) * a / 2.0;
        for k in 2..=last {
            pmf.push(p);
            p *= (k as f64 - 1.0 - a) / (k as f64 + 1.0);
        }
        let (tail_mass, sb_tail) = if a == 1.0 {
            (0.0, 0.0)
        } else {
            (slack_tail(a, c, last as f64), slack_tail_mean(a, c, last as f64))
        };
        let mut acc = KahanSum::default();
        let mut acc_sb = KahanSum::default();
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut sb_cdf = Vec::with_capacity(pmf.len());
        for (k, &p) in pmf.iter().enumerate() {
            acc.add(p);
            acc_sb.add(k as f64 * p / mean);
            cdf.push(acc.value());
            sb_cdf.push(acc_sb.value());
        }
        let law = SlackOffspring {
            alpha,
            c,
            mean,
            pmf,
            cdf,
            sb_cdf,
            tail_mass,
            sb_tail_mass: sb_tail / mean,
        };
        let total = law.cdf.last().unwrap() + law.tail_mass;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("Slack pmf sums to {total}")));
        }
        Ok(law)
    }

    pub fn alpha(&self) -> TailIndex {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Index of the last tabulated count.
    pub fn k_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn table(&self) -> &[f64] {
        &self.pmf
    }

    /// Mass strictly beyond the table.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// `Σ_{j > k_max} j p_j`.
    pub fn tail_mean(&self) -> f64 {
        self.sb_tail_mass * self.mean
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if (k as usize) < self.pmf.len() {
            return self.pmf[k as usize];
        }
        let a = self.alpha.get();
        if a == 1.0 {
            return 0.0;
        }
        // c Γ(k−1−α) / (Γ(−1−α) Γ(k+1)), positive for α ∈ (0, 1).
        self.c * ln_gamma_ratio(k as f64, -1.0 - a, 1.0).exp() / gamma(-1.0 - a)
    }

    pub fn pgf(&self, s: f64) -> f64 {
        let a = self.alpha.get();
        1.0 - self.mean * (1.0 - s) + self.c * (1.0 - s).powf(1.0 + a)
    }

    /// `E[(1−s)^N − 1 + N s] = c s^{1+α}`.
    pub fn excess(&self, s: f64) -> f64 {
        self.c * s.powf(1.0 + self.alpha.get())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        if u < self.tail_mass {
            let a = self.alpha.get();
            let (c, k0) = (self.c, self.k_max() as f64);
            return sample_tail(|k| slack_tail(a, c, k), k0, u / self.tail_mass);
        }
        search(&self.cdf, u - self.tail_mass)
    }

    /// Draw from `k p_k / m`.
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        if u < self.sb_tail_mass {
            let a = self.alpha.get();
            let (c, k0) = (self.c, self.k_max() as f64);
            return sample_tail(|k| slack_tail_mean(a, c, k), k0, u / self.sb_tail_mass);
        }
        search(&self.sb_cdf, u - self.sb_tail_mass)
    }

    /// `E[(N−1)^δ N]`, or `Diverges` when the tail sum is infinite.
    pub fn h5_moment(&self, delta: f64) -> Result<f64> {
        let a = self.alpha.get();
        let mut acc = KahanSum::default();
        for (k, &p) in self.pmf.iter().enumerate().skip(2) {
            acc.add(((k - 1) as f64).powf(delta) * k as f64 * p);
        }
        if a < 1.0 {
            if delta >= a {
                return Err(Error::Diverges(format!(
                    "E[(N-1)^δ N] is infinite for δ = {delta} ≥ α = {a}"
                )));
            }
            // Σ_{k>K} k^{1+δ} p_k with p_k ~ c k^{-2-α}/Γ(-1-α).
            let k = self.k_max() as f64 + 0.5;
            acc.add(self.c / gamma(-1.0 - a) * k.powf(delta - a) / (a - delta));
        }
        finite_or_diverges(acc.value())
    }
}

fn finite_or_diverges(v: f64) -> Result<f64> {
    if v.is_finite() && v < 1e300 {
        Ok(v)
    } else {
        Err(Error::Diverges(format!("moment evaluates to {v}")))
    }
}

/// `Σ_{j>k} p_j = c Γ(k−α) / (|Γ(−α)| Γ(k+1))` for `k ≥ 1`.
fn slack_tail(a: f64, c: f64, k: f64) -> f64 {
    c * a / gamma(1.0 - a) * ln_gamma_ratio(k, -a, 1.0).exp()
}

/// `Σ_{j>k} j p_j = c(1+α) Γ(k−α) / (Γ(1−α) Γ(k))` for `k ≥ 1`.
fn slack_tail_mean(a: f64, c: f64, k: f64) -> f64 {
    c * (1.0 + a) / gamma(1.0 - a) * ln_gamma_ratio(k, -a, 0.0).exp()
}

/// Smallest `k` with `cdf[k] > u`.
fn search(cdf: &[f64], u: f64) -> u64 {
    for (k, &v) in cdf.iter().take(4).enumerate() {
        if u < v {
            return k as u64;
        }
    }
    let k = cdf.partition_point(|&v| v <= u);
    k.min(cdf.len() - 1) as u64
}

/// Sample `X > k0` with `P(X > k | X > k0) = tail(k)/tail(k0)`, given a
/// uniform `v`: the answer is the least `k > k0` with `tail(k) ≤ v tail(k0)`.
fn sample_tail(tail: impl Fn(f64) -> f64, k0: f64, v: f64) -> u64 {
    let target = v * tail(k0);
    let mut lo = k0;
    let mut hi = 2.0 * k0;
    while tail(hi) > target {
        lo = hi;
        hi *= 2.0;
        if hi > COUNT_CAP {
            return COUNT_CAP as u64;
        }
    }
    while hi - lo > 1.0 {
        let mid = (0.5 * (lo + hi)).floor();
        if tail(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi as u64
}

/// Finite-support count law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteOffspring {
    pmf: Vec<f64>,
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl FiniteOffspring {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() || pmf.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(invalid("pmf", "entries must be non-negative and finite"));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("pmf", format!("sums to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(FiniteOffspring { pmf, cdf })
    }

    pub fn binary() -> Self {
        FiniteOffspring::new(vec![0.5, 0.0, 0.5]).unwrap()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn pgf(&self, s: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, p| acc * s + p)
    }

    /// `E[(1−s)^N − 1 + N s]`, evaluated without cancellation for small `s`.
    pub fn excess(&self, s: f64) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, p)| p * power_excess(k as u32, s))
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        search(&self.cdf, u)
    }

    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let m = self.mean();
        let u: f64 = rng.random::<f64>() * m;
        let mut acc = 0.0;
        for (k, p) in self.pmf.iter().enumerate() {
            acc += k as f64 * p;
            if u < acc {
                return k as u64;
            }
        }
        (self.pmf.len() - 1) as u64
    }

    pub fn h5_moment(&self, delta: f64) -> Result<f64> {
        let v = self
            .pmf
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, p)| ((k - 1) as f64).powf(delta) * k as f64 * p)
            .sum();
        finite_or_diverges(v)
    }
}

/// `(1−s)^k − 1 + k s` for `s ∈ [0, 1]`.
pub fn power_excess(k: u32, s: f64) -> f64 {
    let kf = k as f64;
    if kf * s < 0.1 {
        // Σ_{j≥2} binom(k, j) (−s)^j
        let mut term = 1.0;
        let mut sum = 0.0;
        for j in 1..=k {
            term *= -(kf - (j - 1) as f64) / j as f64 * s;
            if j >= 2 {
                sum += term;
                if term.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
        }
        sum
    } else {
        (kf * (-s).ln_1p()).exp_m1() + kf * s
    }
}

/// Per-type count law.
#[derive(Clone, Debug, PartialEq)]
pub enum CountLaw {
    Slack(SlackOffspring),
    Finite(FiniteOffspring),
}

impl CountLaw {
    pub fn mean(&self) -> f64 {
        match self {
            CountLaw::Slack(l) => l.mean(),
            CountLaw::Finite(l) => l.mean(),
        }
    }

    pub fn pgf(&self, s: f64) -> f64 {
        match self {
            CountLaw::Slack(l) => l.pgf(s),
            CountLaw::Finite(l) => l.pgf(s),
        }
    }

    pub fn excess(&self, s: f64) -> f64 {
        match self {
            CountLaw::Slack(l) => l.excess(s),
            CountLaw::Finite(l) => l.excess(s),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            CountLaw::Slack(l) => l.sample(rng),
            CountLaw::Finite(l) => l.sample(rng),
        }
    }

    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            CountLaw::Slack(l) => l.sample_size_biased(rng),
            CountLaw::Finite(l) => l.sample_size_biased(rng),
        }
    }

    pub fn h5_moment(&self, delta: f64) -> Result<f64> {
        match self {
            CountLaw::Slack(l) => l.h5_moment(delta),
            CountLaw::Finite(l) => l.h5_moment(delta),
        }
    }

    /// Tail index of the law: `α` for Slack, 1 for finite support.
    pub fn tail_index(&self) -> f64 {
        match self {
            CountLaw::Slack(l) => l.alpha().get(),
            CountLaw::Finite(_) => 1.0,
        }
    }
}
