//! Parametric jump kernels for continuous-state branching.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::{excess_power_integral, gamma};

/// A measure on `(0, ∞)` with `∫ (y ∧ y²) K(dy) < ∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyKernel {
    Zero,
    /// `κ / Γ(−1−α) · y^{−2−α} dy`, whose excess transform is `κ λ^{1+α}`.
    Stable { kappa: f64, alpha: f64 },
    /// `w · y^{−2−α} dy` restricted to `[lower, upper]`.
    PowerTail {
        weight: f64,
        alpha: f64,
        lower: f64,
        #[serde(default = "infinity")]
        upper: f64,
    },
    /// Point masses `(location, mass)`.
    Atoms { atoms: Vec<(f64, f64)> },
}

fn infinity() -> f64 {
    f64::INFINITY
}

impl LevyKernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LevyKernel::Zero => Ok(()),
            LevyKernel::Stable { kappa, alpha } => {
                if !(*kappa > 0.0) {
                    return Err(invalid("kappa", "must be positive"));
                }
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(invalid("alpha", "stable jump kernels need alpha in (0, 1)"));
                }
                Ok(())
            }
            LevyKernel::PowerTail {
                weight,
                alpha,
                lower,
                upper,
            } => {
                if !(*weight > 0.0) {
                    return Err(invalid("weight", "must be positive"));
                }
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(invalid("alpha", "must lie in (0, 1]"));
                }
                if !(*lower >= 0.0 && upper > lower) {
                    return Err(invalid("lower", "need 0 ≤ lower < upper"));
                }
                if *lower == 0.0 && *alpha == 1.0 {
                    return Err(invalid("lower", "alpha = 1 needs a positive lower cutoff"));
                }
                Ok(())
            }
            LevyKernel::Atoms { atoms } => {
                if atoms.iter().any(|(y, w)| !(*y > 0.0 && *w >= 0.0 && y.is_finite())) {
                    return Err(invalid("atoms", "locations must be positive, masses non-negative"));
                }
                Ok(())
            }
        }
    }

    /// Index `α` when the kernel has an untruncated `y^{−2−α}` tail.
    pub fn tail_index(&self) -> Option<f64> {
        match self {
            LevyKernel::Stable { alpha, .. } => Some(*alpha),
            LevyKernel::PowerTail { alpha, upper, .. } if upper.is_infinite() => Some(*alpha),
            _ => None,
        }
    }

    /// `∫ (e^{−λy} − 1 + λy) K(dy)`.
    pub fn excess(&self, lambda: f64) -> Result<f64> {
        if lambda == 0.0 {
            return Ok(0.0);
        }
        match self {
            LevyKernel::Zero => Ok(0.0),
            LevyKernel::Stable { kappa, alpha } => Ok(kappa * lambda.powf(1.0 + alpha)),
            LevyKernel::PowerTail {
                weight,
                alpha,
                lower,
                upper,
            } => Ok(weight
                * lambda.powf(1.0 + alpha)
                * excess_power_integral(*alpha, lambda * lower, lambda * upper)?),
            LevyKernel::Atoms { atoms } => Ok(atoms
                .iter()
                .map(|(y, w)| w * crate::quad::excess_exp(lambda * y))
                .sum()),
        }
    }

    /// `∫ y K(dy)`, infinite for the stable kernel.
    pub fn first_moment(&self) -> f64 {
        match self {
            LevyKernel::Zero => 0.0,
            LevyKernel::Stable { .. } => f64::INFINITY,
            LevyKernel::PowerTail {
                weight,
                alpha,
                lower,
                upper,
            } => {
                if *lower == 0.0 {
                    return f64::INFINITY;
                }
                let p = |y: f64| if y.is_infinite() { 0.0 } else { -y.powf(-alpha) / alpha };
                weight * (p(*upper) - p(*lower))
            }
            LevyKernel::Atoms { atoms } => atoms.iter().map(|(y, w)| y * w).sum(),
        }
    }

    /// `∫ y^p K(dy)` over `y ≥ 1` for `1 ≤ p < 2`; `Diverges` when infinite.
    pub fn large_jump_moment(&self, p: f64) -> Result<f64> {
        let power_part = |w: f64, alpha: f64, lo: f64, hi: f64| -> Result<f64> {
            // ∫_lo^hi w y^{p−2−α} dy
            let e = p - 1.0 - alpha;
            if hi.is_infinite() && e >= 0.0 {
                return Err(Error::Diverges(format!(
                    "∫ y^{p} K(dy) is infinite for tail index {alpha}"
                )));
            }
            let prim = |y: f64| if y.is_infinite() { 0.0 } else { y.powf(e) / e };
            Ok(w * (prim(hi) - prim(lo)))
        };
        match self {
            LevyKernel::Zero => Ok(0.0),
            LevyKernel::Stable { kappa, alpha } => {
                power_part(kappa / gamma(-1.0 - alpha), *alpha, 1.0, f64::INFINITY)
            }
            LevyKernel::PowerTail {
                weight,
                alpha,
                lower,
                upper,
            } => {
                let lo = lower.max(1.0);
                if lo >= *upper {
                    return Ok(0.0);
                }
                power_part(*weight, *alpha, lo, *upper)
            }
            LevyKernel::Atoms { atoms } => Ok(atoms
                .iter()
                .filter(|(y, _)| *y >= 1.0)
                .map(|(y, w)| w * y.powf(p))
                .sum()),
        }
    }

    /// `∫ (1 ∨ y^δ) y K(dy)`.
    pub fn h5_weight(&self, delta: f64) -> Result<f64> {
        let small = match self {
            LevyKernel::Zero => 0.0,
            LevyKernel::Stable { .. } => f64::INFINITY,
            LevyKernel::PowerTail {
                weight,
                alpha,
                lower,
                upper,
            } => {
                let hi = upper.min(1.0);
                if *lower >= hi {
                    0.0
                } else if *lower == 0.0 {
                    f64::INFINITY
                } else {
                    weight * (lower.powf(-alpha) - hi.powf(-alpha)) / alpha
                }
            }
            LevyKernel::Atoms { atoms } => atoms.iter().filter(|(y, _)| *y < 1.0).map(|(y, w)| y * w).sum(),
        };
        if !small.is_finite() {
            return Err(Error::Diverges("kernel has infinite mean near the origin".into()));
        }
        Ok(small + self.large_jump_moment(1.0 + delta)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_excess_closed_form() {
        let k = LevyKernel::Stable { kappa: 2.0, alpha: 0.5 };
        assert!((k.excess(4.0).unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn untruncated_power_tail_matches_stable() {
        let a = 0.6;
        let w = 1.0 / gamma(-1.0 - a);
        let k = LevyKernel::PowerTail {
            weight: w,
            alpha: a,
            lower: 0.0,
            upper: f64::INFINITY,
        };
        for lam in [0.01, 1.0, 30.0] {
            let v = k.excess(lam).unwrap();
            assert!((v / lam.powf(1.0 + a) - 1.0).abs() < 1e-9, "{lam}: {v}");
        }
    }

    #[test]
    fn atoms_excess() {
        let k = LevyKernel::Atoms {
            atoms: vec![(1.0, 2.0)],
        };
        let v = k.excess(1.0).unwrap();
        assert!((v - 2.0 * ((-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(k.first_moment(), 2.0);
    }

    #[test]
    fn h5_stable_threshold() {
        let k = LevyKernel::Stable { kappa: 1.0, alpha: 0.5 };
        assert!(k.large_jump_moment(1.25).unwrap().is_finite());
        assert!(k.large_jump_moment(1.75).is_err());
    }
}
