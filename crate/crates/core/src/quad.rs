//! Small numerical kernels: adaptive quadrature, stable special functions and
//! the excess integrals behind Lévy-type branching mechanisms.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature with a Richardson-corrected local error test.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut exhausted = false;
    let out = simpson_step(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut exhausted);
    if exhausted || !out.is_finite() {
        return Err(Error::Quadrature { a, b });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    exhausted: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *exhausted = true;
        return left + right;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, exhausted)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, exhausted)
}

/// `e^{-z} - 1 + z` without cancellation near zero.
pub fn excess_exp(z: f64) -> f64 {
    if z.abs() < 0.1 {
        // z^2/2 - z^3/6 + ...
        let mut term = 0.5 * z * z;
        let mut sum = term;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs() {
            k += 1.0;
            term *= -z / k;
            sum += term;
        }
        sum
    } else {
        (-z).exp_m1() + z
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// `ln Γ(k + a) − ln Γ(k + b)` for large positive `k`, accurate where the two
/// log-gammas would cancel catastrophically.
pub fn ln_gamma_ratio(k: f64, a: f64, b: f64) -> f64 {
    if k < 1.0e4 {
        return ln_gamma(k + a) - ln_gamma(k + b);
    }
    // Stirling difference expanded in 1/k.
    let d = a - b;
    let b2 = |x: f64| x * x - x + 1.0 / 6.0;
    let b3 = |x: f64| x * x * x - 1.5 * x * x + 0.5 * x;
    let t1 = (b2(a) - b2(b)) / (2.0 * k);
    let t2 = -(b3(a) - b3(b)) / (6.0 * k * k);
    d * k.ln() + t1 + t2
}

/// `∫_a^b (e^{-z} − 1 + z) z^{-2-α} dz` for `0 ≤ a < b ≤ ∞`, `α ∈ (0, 1]`.
///
/// Exact series on `[0, 1]`, adaptive quadrature in `ln z` on `[1, 50]`, and
/// the closed form of `∫ (z − 1) z^{-2-α}` beyond 50 where `e^{-z}` is below
/// rounding.
pub fn excess_power_integral(alpha: f64, a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && b > a) {
        return Err(Error::Domain(format!("excess integral bounds [{a}, {b}]")));
    }
    if a == 0.0 && alpha >= 1.0 {
        return Err(Error::Diverges(
            "excess integral with alpha = 1 diverges at the origin".into(),
        ));
    }
    let mut total = 0.0;
    if a < 1.0 {
        total += excess_series(alpha, a, b.min(1.0));
    }
    let (lo, hi) = (a.max(1.0), b.min(50.0));
    if hi > lo {
        let g = |w: f64| {
            let z = w.exp();
            excess_exp(z) * (-(1.0 + alpha) * w).exp()
        };
        total += adaptive_simpson(g, lo.ln(), hi.ln(), 1e-14)?;
    }
    let lo = a.max(50.0);
    if b > lo {
        let p = |z: f64| {
            if z.is_infinite() {
                0.0
            } else {
                -z.powf(-alpha) / alpha + z.powf(-1.0 - alpha) / (1.0 + alpha)
            }
        };
        total += p(b) - p(lo);
    }
    Ok(total)
}

/// Term-by-term integral of the exponential series over `[a, b] ⊂ [0, 1]`.
fn excess_series(alpha: f64, a: f64, b: f64) -> f64 {
    let mut sum = 0.0;
    let mut inv_fact = 0.5;
    let mut sign = 1.0;
    for k in 2..60 {
        if k > 2 {
            inv_fact /= k as f64;
            sign = -sign;
        }
        let e = k as f64 - 1.0 - alpha;
        let piece = if e.abs() < 1e-14 {
            (b / a).ln()
        } else {
            (b.powf(e) - if a > 0.0 { a.powf(e) } else { 0.0 }) / e
        };
        let term = sign * inv_fact * piece;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() && k > 4 {
            break;
        }
    }
    sum
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial() {
        let v = adaptive_simpson(|x| x * x * x - x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_reports_failure_on_singularity() {
        let r = adaptive_simpson(|x: f64| 1.0 / x, 0.0, 1.0, 1e-12);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn excess_exp_matches_direct_away_from_zero() {
        for z in [0.2f64, 1.0, 7.5] {
            let direct = (-z).exp() - 1.0 + z;
            assert!((excess_exp(z) - direct).abs() < 1e-15);
        }
        let z = 1e-5f64;
        assert!((excess_exp(z) / (z * z / 2.0 - z * z * z / 6.0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn full_excess_integral_is_gamma() {
        // ∫_0^∞ (e^{-z}-1+z) z^{-2-α} dz = Γ(-1-α), evaluated independently
        // through the reflection Γ(x) = Γ(x+2)/(x(x+1)).
        for alpha in [0.2, 0.5, 0.8] {
            let x = -1.0 - alpha;
            let g = gamma(x + 2.0) / (x * (x + 1.0));
            let v = excess_power_integral(alpha, 0.0, f64::INFINITY).unwrap();
            assert!((v / g - 1.0).abs() < 1e-9, "alpha {alpha}: {v} vs {g}");
        }
    }

    #[test]
    fn excess_integral_is_additive() {
        let whole = excess_power_integral(1.0, 0.3, 80.0).unwrap();
        let split = excess_power_integral(1.0, 0.3, 2.0).unwrap()
            + excess_power_integral(1.0, 2.0, 80.0).unwrap();
        assert!((whole - split).abs() < 1e-12);
    }

    #[test]
    fn gamma_ratio_expansion_matches_direct() {
        let k = 2.0e4;
        let direct = ln_gamma(k - 0.5) - ln_gamma(k + 1.0);
        let approx = ln_gamma_ratio(k, -0.5, 1.0);
        assert!((direct - approx).abs() < 1e-9);
    }
}
