//! Critical eigen-elements of the mean semigroup `T_t = exp(tL)` and the
//! uniform-ergodicity profile `Δ_t`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::Model;

/// `(λ, φ, φ̃)` with `Lφ = λφ`, `φ̃ᵀL = λφ̃ᵀ`, `max φ = 1` and `⟨φ, φ̃⟩ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenTriplet {
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub phi_tilde: Vec<f64>,
}

impl EigenTriplet {
    /// Errors with `NotCritical` when `|λ| > tol`.
    pub fn require_critical(&self, tol: f64) -> Result<&Self> {
        if self.lambda.abs() > tol {
            return Err(Error::NotCritical { lambda: self.lambda });
        }
        Ok(self)
    }

    pub fn pair_with_phi_tilde(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.phi_tilde).map(|(a, b)| a * b).sum()
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }
}

pub const CRITICAL_TOL: f64 = 1e-9;

/// Mean-semigroup generator of a model. The diffusion is discretised on its
/// grid with the discrete critical mean.
pub fn generator_l(model: &Model) -> DMatrix<f64> {
    model.generator()
}

/// True when the directed graph of positive off-diagonal entries is strongly
/// connected.
pub fn is_irreducible(l: &DMatrix<f64>) -> bool {
    let n = l.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { l[(i, j)] } else { l[(j, i)] };
                if i != j && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    n > 0 && reach(true) && reach(false)
}

/// Leading eigen-triplet by power iteration on `exp(hL)`, with `h` doubled
/// whenever progress stalls, followed by inverse-iteration polishing.
pub fn eigen_triplet(l: &DMatrix<f64>) -> Result<EigenTriplet> {
    if l.nrows() != l.ncols() || l.nrows() == 0 {
        return Err(Error::Domain("generator must be a non-empty square matrix".into()));
    }
    if !is_irreducible(l) {
        return Err(Error::NotIrreducible);
    }
    let n = l.nrows();
    if n == 1 {
        return Ok(EigenTriplet {
            lambda: l[(0, 0)],
            phi: vec![1.0],
            phi_tilde: vec![1.0],
        });
    }
    let right = leading_vector(l)?;
    let lt = l.transpose();
    let left = leading_vector(&lt)?;
    let lambda = (left.dot(&(l * &right))) / left.dot(&right);

    let max = right.max();
    let phi = &right / max;
    let scale = phi.dot(&left);
    let phi_tilde = &left / scale;
    if phi.iter().chain(phi_tilde.iter()).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("Perron vector has a non-positive entry".into()));
    }
    Ok(EigenTriplet {
        lambda,
        phi: phi.iter().copied().collect(),
        phi_tilde: phi_tilde.iter().copied().collect(),
    })
}

fn leading_vector(l: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = l.nrows();
    let norm = l.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut e = (l * (1.0 / norm)).exp();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut converged = false;
    'outer: for _ in 0..40 {
        for _ in 0..250 {
            let mut w = &e * &v;
            let wn = w.norm();
            if !(wn > 0.0 && wn.is_finite()) {
                return Err(Error::NonConvergence {
                    iterations: 0,
                    residual: f64::NAN,
                });
            }
            w /= wn;
            let change = (&w - &v).norm();
            v = w;
            if change < 1e-13 {
                converged = true;
                break 'outer;
            }
        }
        e = &e * &e;
        let m = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        e /= m;
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: 10_000,
            residual: f64::NAN,
        });
    }
    // Polish: inverse iteration just off the Rayleigh estimate.
    let lambda = v.dot(&(l * &v)) / v.dot(&v);
    for _ in 0..2 {
        let shift = lambda + 1e-7 * norm.max(1.0);
        let a = l - DMatrix::identity(n, n) * shift;
        match a.lu().solve(&v) {
            Some(x) if x.iter().all(|c| c.is_finite()) => {
                let s = if x.sum() < 0.0 { -1.0 } else { 1.0 };
                v = &x * (s / x.norm());
            }
            _ => break,
        }
    }
    if v.sum() < 0.0 {
        v = -v;
    }
    Ok(v)
}

/// `Δ_t` over a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaProfile {
    pub t_grid: Vec<f64>,
    pub delta_values: Vec<f64>,
    pub delta_sup: f64,
}

/// `Δ_t = max_{i,j} |M_ij(t)/(φ_i φ̃_j) − 1|` with `M(t) = exp(tL)`.
///
/// For finitely many types the supremum over `f ≥ 0` of the linear-fractional
/// ratio `(M f)_i / (φ_i ⟨f, φ̃⟩)` is attained at a coordinate vector, so the
/// max over entries is exact.
pub fn delta_profile(l: &DMatrix<f64>, triplet: &EigenTriplet, t_grid: &[f64]) -> DeltaProfile {
    let n = l.nrows();
    let delta_values: Vec<f64> = t_grid
        .iter()
        .map(|&t| {
            let m = (l * t).exp();
            let mut worst = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let r = m[(i, j)] / (triplet.phi[i] * triplet.phi_tilde[j]) - 1.0;
                    worst = worst.max(r.abs());
                }
            }
            worst
        })
        .collect();
    let delta_sup = delta_values.iter().fold(0.0f64, |a, &b| a.max(b));
    DeltaProfile {
        t_grid: t_grid.to_vec(),
        delta_values,
        delta_sup,
    }
}

/// `‖Lφ − λφ‖_∞` and `‖φ̃ᵀL − λφ̃ᵀ‖_∞`.
pub fn residuals(l: &DMatrix<f64>, t: &EigenTriplet) -> (f64, f64) {
    let phi = DVector::from_column_slice(&t.phi);
    let pt = DVector::from_column_slice(&t.phi_tilde);
    let r = (l * &phi - &phi * t.lambda).amax();
    let lft = (l.transpose() * &pt - &pt * t.lambda).amax();
    (r, lft)
}
