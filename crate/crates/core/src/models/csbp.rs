use nalgebra::DMatrix;

use super::levy::LevyKernel;
use crate::error::{invalid, Error, Result};
use crate::regvar::TailIndex;

/// Critical stable continuous-state branching: `ψ(λ) = κ λ^{1+α}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableCSBP {
    pub kappa: f64,
    pub alpha: TailIndex,
}

impl StableCSBP {
    pub fn new(kappa: f64, alpha: TailIndex) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid("kappa", "must be positive"));
        }
        Ok(StableCSBP { kappa, alpha })
    }

    pub fn psi(&self, lambda: f64) -> f64 {
        self.kappa * lambda.powf(1.0 + self.alpha.get())
    }

    /// Grey's integral `∫_1^∞ dλ/ψ(λ) = 1/(ακ)`.
    pub fn grey_integral(&self) -> f64 {
        1.0 / (self.alpha.get() * self.kappa)
    }

    /// The same process written as a one-type superprocess.
    pub fn as_multitype(&self) -> MultiTypeCSBP {
        let a = self.alpha.get();
        let (c, nu) = if a == 1.0 {
            (self.kappa, LevyKernel::Zero)
        } else {
            (0.0, LevyKernel::Stable {
                kappa: self.kappa,
                alpha: a,
            })
        };
        MultiTypeCSBP {
            b: vec![0.0],
            c: vec![c],
            nu: vec![nu],
            beta: vec![0.0],
            gamma_tilde: vec![0.0],
            jump: vec![LevyKernel::Zero],
            pi: vec![vec![0.0]],
        }
    }
}

/// Finite-type superprocess with local mechanism
/// `ψ_i(λ) = −b_i λ + c_i λ² + ∫(e^{−λy} − 1 + λy) ν_i(dy)` and non-local
/// branching at rate `β_i` that sends mass `γ̃_i` plus jumps `u ~ Γ̃_i` to
/// the other types in proportions `π_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTypeCSBP {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub nu: Vec<LevyKernel>,
    pub beta: Vec<f64>,
    pub gamma_tilde: Vec<f64>,
    pub jump: Vec<LevyKernel>,
    pub pi: Vec<Vec<f64>>,
}

impl MultiTypeCSBP {
    pub fn validate(&self) -> Result<()> {
        let n = self.b.len();
        let lens = [
            self.c.len(),
            self.nu.len(),
            self.beta.len(),
            self.gamma_tilde.len(),
            self.jump.len(),
            self.pi.len(),
        ];
        if n == 0 || lens.iter().any(|&l| l != n) {
            return Err(invalid("types", "every per-type field needs one entry per type"));
        }
        for i in 0..n {
            if !(self.c[i] >= 0.0) || !(self.beta[i] >= 0.0) || !(self.gamma_tilde[i] >= 0.0) {
                return Err(invalid("c", "c, beta and gamma_tilde must be non-negative"));
            }
            if !self.b[i].is_finite() {
                return Err(invalid("b", "must be finite"));
            }
            self.nu[i].validate()?;
            self.jump[i].validate()?;
            let row = &self.pi[i];
            if row.len() != n || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(invalid("pi", "rows must be non-negative with one entry per type"));
            }
            if n == 1 && self.beta[i] != 0.0 {
                return Err(invalid("beta", "a single type has no non-local branching"));
            }
            if n > 1 {
                if row[i] != 0.0 {
                    return Err(invalid("pi", "pi_i(i) must vanish"));
                }
                let s: f64 = row.iter().sum();
                if self.beta[i] > 0.0 && (s - 1.0).abs() > 1e-12 {
                    return Err(invalid("pi", format!("row {i} sums to {s}")));
                }
            }
            let transfer = self.gamma_tilde[i] + self.jump[i].first_moment();
            if transfer > 1.0 + 1e-12 {
                return Err(invalid(
                    "gamma_tilde",
                    format!("type {i}: gamma_tilde + ∫u Γ̃(du) = {transfer} exceeds 1"),
                ));
            }
        }
        Ok(())
    }

    pub fn n_types(&self) -> usize {
        self.b.len()
    }

    /// `L_ij = (b_i − β_i) δ_ij + β_i (γ̃_i + ∫u Γ̃_i(du)) π_i(j)`.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.n_types();
        DMatrix::from_fn(n, n, |i, j| {
            let local = if i == j { self.b[i] - self.beta[i] } else { 0.0 };
            local + self.beta[i] * self.transfer(i) * self.pi[i][j]
        })
    }

    fn transfer(&self, i: usize) -> f64 {
        self.gamma_tilde[i] + self.jump[i].first_moment()
    }

    /// `J[h]_i = c_i h_i² + ∫(e^{−h_i y} − 1 + h_i y) ν_i(dy)
    ///   + β_i ∫(e^{−u⟨h,π_i⟩} − 1 + u⟨h,π_i⟩) Γ̃_i(du)`.
    pub fn eval_j(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.n_types() || h.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain("J needs a finite non-negative vector per type".into()));
        }
        let mut out = vec![0.0; h.len()];
        self.eval_j_into(h, &mut out)?;
        Ok(out)
    }

    pub(crate) fn eval_j_into(&self, h: &[f64], out: &mut [f64]) -> Result<()> {
        for i in 0..self.n_types() {
            let hi = h[i].max(0.0);
            let mut v = self.c[i] * hi * hi + self.nu[i].excess(hi)?;
            if self.beta[i] > 0.0 {
                let proj: f64 = self.pi[i].iter().zip(h).map(|(p, x)| p * x.max(0.0)).sum();
                v += self.beta[i] * self.jump[i].excess(proj)?;
            }
            out[i] = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn symmetric_pair(c: f64) -> MultiTypeCSBP {
        MultiTypeCSBP {
            b: vec![0.0; 2],
            c: vec![c; 2],
            nu: vec![LevyKernel::Zero, LevyKernel::Zero],
            beta: vec![1.0; 2],
            gamma_tilde: vec![1.0; 2],
            jump: vec![LevyKernel::Zero, LevyKernel::Zero],
            pi: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        }
    }

    #[test]
    fn swap_generator() {
        let m = symmetric_pair(1.0);
        m.validate().unwrap();
        assert_eq!(m.generator(), DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
    }

    #[test]
    fn pure_quadratic_j() {
        let mut m = symmetric_pair(1.0);
        m.beta = vec![0.0; 2];
        assert_eq!(m.eval_j(&[0.5, 0.5]).unwrap(), vec![0.25, 0.25]);
        assert_eq!(symmetric_pair(1.0).eval_j(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn transfer_bound_is_enforced() {
        let mut m = symmetric_pair(1.0);
        m.jump[0] = LevyKernel::Atoms {
            atoms: vec![(1.0, 0.5)],
        };
        assert!(m.validate().is_err());
        m.gamma_tilde[0] = 0.5;
        m.validate().unwrap();
    }

    #[test]
    fn stable_as_multitype_matches_psi() {
        let s = StableCSBP::new(2.0, TailIndex::new(0.7).unwrap()).unwrap();
        let j = s.as_multitype().eval_j(&[1.3]).unwrap()[0];
        assert!((j - s.psi(1.3)).abs() < 1e-12);
        let f = StableCSBP::new(2.0, TailIndex::new(1.0).unwrap()).unwrap();
        assert!((f.as_multitype().eval_j(&[1.3]).unwrap()[0] - 2.0 * 1.69).abs() < 1e-12);
    }
}
