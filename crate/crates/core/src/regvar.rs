//! Regular variation: slowly varying factors, Bruijn conjugates and the
//! inversion `t = R(a_t)` that turns `⟨A[xφ], φ̃⟩ = x^{1+α} ℓ(x)` into the
//! survival scale `a_t ~ t^{-1/α} ℓ̃(t)`.
//!
//! Every slowly varying representative here is only meaningful through its
//! asymptote; values away from the limit are a representative choice.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// The tail index `α ∈ (0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TailIndex(f64);

impl TailIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(TailIndex(alpha))
        } else {
            Err(invalid("alpha", format!("{alpha} is outside (0, 1]")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TailIndex {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        TailIndex::new(v)
    }
}

impl From<TailIndex> for f64 {
    fn from(a: TailIndex) -> f64 {
        a.0
    }
}

/// Table of `(x, y)` pairs interpolated linearly in `(ln x, ln y)` and held
/// flat beyond both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl LogLogTable {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(invalid("table", "needs matching, non-empty x and y columns"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("table", "x column must be strictly increasing"));
        }
        if xs.iter().chain(ys.iter()).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("table", "entries must be positive and finite"));
        }
        Ok(LogLogTable { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NAN;
        }
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let j = self.xs.partition_point(|&v| v <= x);
        let (x0, x1) = (self.xs[j - 1].ln(), self.xs[j].ln());
        let (y0, y1) = (self.ys[j - 1].ln(), self.ys[j].ln());
        let w = (x.ln() - x0) / (x1 - x0);
        (y0 + w * (y1 - y0)).exp()
    }
}

/// A slowly varying function at zero, evaluable on `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlowlyVarying {
    /// `ℓ(x) = c`.
    Constant { c: f64 },
    /// `ℓ(x) = c (1 + ln(1/x))^p`.
    LogPower { c: f64, p: f64 },
    /// `ℓ(x) = c (1 + ln(1 + ln(1/x)))`.
    IterLog { c: f64 },
    Tabulated { table: LogLogTable },
}

impl SlowlyVarying {
    pub fn constant(c: f64) -> Self {
        SlowlyVarying::Constant { c }
    }

    /// Largest admissible argument.
    pub fn x_max(&self) -> f64 {
        match self {
            SlowlyVarying::Constant { .. } => f64::INFINITY,
            SlowlyVarying::Tabulated { .. } => f64::INFINITY,
            _ => 1.0,
        }
    }

    /// Value at `x`; `NaN` outside `(0, x_max]`.
    pub fn eval(&self, x: f64) -> f64 {
        if !(x > 0.0 && x <= self.x_max()) {
            return f64::NAN;
        }
        match self {
            SlowlyVarying::Constant { c } => *c,
            SlowlyVarying::LogPower { c, p } => c * (1.0 - x.ln()).powf(*p),
            SlowlyVarying::IterLog { c } => c * (1.0 + (1.0 - x.ln()).ln()),
            SlowlyVarying::Tabulated { table } => table.eval(x),
        }
    }

    pub(crate) fn eval_checked(&self, x: f64) -> Result<f64> {
        let v = self.eval(x);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("slowly varying factor is {v} at x = {x:e}")))
        }
    }
}

/// A slowly varying function at infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlowlyVaryingAtInfinity {
    Constant { c: f64 },
    /// `L(s) = c (ln s)^p`, defined for `s > 1`.
    LogPower { c: f64, p: f64 },
    /// `L(s) = (α ℓ(1/s))^{-1/α}`, the factor attached to the inverse of
    /// `x ↦ x^α ℓ(x)`.
    FromZero { alpha: TailIndex, ell: SlowlyVarying },
    Tabulated { table: LogLogTable },
}

impl SlowlyVaryingAtInfinity {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            SlowlyVaryingAtInfinity::Constant { c } => *c,
            SlowlyVaryingAtInfinity::LogPower { c, p } => {
                if s > 1.0 {
                    c * s.ln().powf(*p)
                } else {
                    f64::NAN
                }
            }
            SlowlyVaryingAtInfinity::FromZero { alpha, ell } => {
                let a = alpha.get();
                (a * ell.eval(1.0 / s)).powf(-1.0 / a)
            }
            SlowlyVaryingAtInfinity::Tabulated { table } => table.eval(s),
        }
    }

    fn eval_checked(&self, s: f64) -> Result<f64> {
        let v = self.eval(s);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("L evaluates to {v} at s = {s:e}")))
        }
    }
}

/// A slowly varying `L` together with its tabulated Bruijn conjugate `L*`,
/// which satisfies `L(t L*(t)) L*(t) → 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugatePair {
    pub l: SlowlyVaryingAtInfinity,
    pub l_star: LogLogTable,
    pub t_grid: Vec<f64>,
    /// Largest defining-relation residual over the grid.
    pub max_residual: f64,
}

impl ConjugatePair {
    pub fn residual_at(&self, t: f64) -> f64 {
        let ls = self.l_star.eval(t);
        (self.l.eval(t * ls) * ls - 1.0).abs()
    }
}

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Pointwise fixed point `L*_{n+1}(t) = 1/L(t L*_n(t))` from `L*_0 = 1`.
pub fn bruijn_conjugate(
    l: &SlowlyVaryingAtInfinity,
    t_grid: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<ConjugatePair> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid[0] <= 0.0 {
        return Err(invalid("t_grid", "must be positive and strictly increasing"));
    }
    let mut values = Vec::with_capacity(t_grid.len());
    let mut worst = 0.0f64;
    for &t in t_grid {
        let (v, r) = conjugate_point(l, t, tol, max_iter)?;
        values.push(v);
        worst = worst.max(r);
    }
    Ok(ConjugatePair {
        l: l.clone(),
        l_star: LogLogTable::new(t_grid.to_vec(), values)?,
        t_grid: t_grid.to_vec(),
        max_residual: worst,
    })
}

fn conjugate_point(l: &SlowlyVaryingAtInfinity, t: f64, tol: f64, max_iter: usize) -> Result<(f64, f64)> {
    let mut y = 1.0;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = 1.0 / l.eval_checked(t * y)?;
        residual = (l.eval_checked(t * next)? * next - 1.0).abs();
        y = next;
        if residual < tol {
            return Ok((y, residual));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// `t^{-1/α} ℓ̃(t)` with `ℓ̃(t) = 1/L*(t^{1/α})` and `L(s) = (α ℓ(1/s))^{-1/α}`.
pub fn survival_asymptote(alpha: TailIndex, ell: &SlowlyVarying, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t = {t} must be positive")));
    }
    let a = alpha.get();
    let l = SlowlyVaryingAtInfinity::FromZero {
        alpha,
        ell: ell.clone(),
    };
    let s = t.powf(1.0 / a);
    let (l_star, _) = conjugate_point(&l, s, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    Ok(t.powf(-1.0 / a) / l_star)
}

/// `R(a) = 1/(α a^α ℓ(a))`, the asymptotic inverse of `t ↦ a_t`.
pub fn invert_at(alpha: TailIndex, ell: &SlowlyVarying, a: f64, a0: f64) -> Result<f64> {
    if !(a > 0.0 && a < a0) {
        return Err(Error::Domain(format!("a = {a} outside (0, {a0})")));
    }
    let al = alpha.get();
    Ok(1.0 / (al * a.powf(al) * ell.eval_checked(a)?))
}

/// Geometric grid with `per_decade` points per decade from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).round() as usize).max(1);
    (0..=n)
        .map(|i| lo * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha(a: f64) -> TailIndex {
        TailIndex::new(a).unwrap()
    }

    #[test]
    fn tail_index_rejects_zero_and_above_one() {
        assert!(TailIndex::new(0.0).is_err());
        assert!(TailIndex::new(1.2).is_err());
        assert!(TailIndex::new(1.0).is_ok());
    }

    #[test]
    fn constant_conjugate_is_reciprocal() {
        let l = SlowlyVaryingAtInfinity::Constant { c: 4.0 };
        let pair = bruijn_conjugate(&l, &[1.0, 10.0, 100.0], 1e-8, 1).unwrap();
        for &t in &pair.t_grid {
            assert_eq!(pair.l_star.eval(t), 0.25);
        }
        assert_eq!(pair.max_residual, 0.0);
    }

    #[test]
    fn log_conjugate_is_roughly_inverse_log() {
        let l = SlowlyVaryingAtInfinity::LogPower { c: 1.0, p: 1.0 };
        let grid = log_grid(1e2, 1e8, 1);
        let pair = bruijn_conjugate(&l, &grid, 1e-8, 200).unwrap();
        assert!(pair.max_residual < 1e-8);
        // L*(t) log t → 1 with a log log t / log t correction.
        let t = 1e8;
        let prod = pair.l_star.eval(t) * t.ln();
        assert!(prod > 1.0 && prod < 1.25, "{prod}");
        let prev = pair.l_star.eval(1e4) * 1e4f64.ln();
        assert!(prod < prev);
    }

    #[test]
    fn bruijn_reports_domain_error() {
        let l = SlowlyVaryingAtInfinity::LogPower { c: 1.0, p: 1.0 };
        assert!(matches!(
            bruijn_conjugate(&l, &[0.5], 1e-8, 10),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn feller_conjugate_limit() {
        let l = SlowlyVaryingAtInfinity::FromZero {
            alpha: alpha(1.0),
            ell: SlowlyVarying::constant(0.3),
        };
        let pair = bruijn_conjugate(&l, &[1e3, 1e6], 1e-10, 50).unwrap();
        assert!((pair.l_star.eval(1e6) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn inversion_examples() {
        let one = SlowlyVarying::constant(1.0);
        assert!((invert_at(alpha(1.0), &one, 0.01, 1.0).unwrap() - 100.0).abs() < 1e-12);
        let r = invert_at(alpha(0.5), &one, 0.1, 1.0).unwrap();
        assert!((r - 1.0 / (0.5 * 0.1f64.sqrt())).abs() < 1e-12);
        assert!(invert_at(alpha(0.5), &one, 2.0, 1.0).is_err());
    }

    #[test]
    fn survival_asymptote_stable_case() {
        // Exact a_t = (α t)^{-1/α} for ψ(λ) = λ^{1+α}.
        let one = SlowlyVarying::constant(1.0);
        let t = 1e3;
        let v = survival_asymptote(alpha(0.5), &one, t).unwrap();
        assert!((v / (t / 2.0).powi(-2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_power_slow_variation() {
        let ell = SlowlyVarying::LogPower { c: 1.0, p: 2.0 };
        let mut last = f64::INFINITY;
        for k in 2..12 {
            let x = 10f64.powi(-k);
            let gap = (ell.eval(0.5 * x) / ell.eval(x) - 1.0).abs();
            assert!(gap < last);
            last = gap;
        }
        assert!(ell.eval(2.0).is_nan());
    }

    #[test]
    fn table_interpolates_power_laws_exactly() {
        let t = LogLogTable::new(vec![1.0, 10.0, 100.0], vec![1.0, 0.1, 0.01]).unwrap();
        assert!((t.eval(31.0) - 1.0 / 31.0).abs() < 1e-14);
        assert_eq!(t.eval(1e4), 0.01);
        assert!(LogLogTable::new(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
    }
}
