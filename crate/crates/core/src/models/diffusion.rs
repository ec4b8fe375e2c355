use std::f64::consts::PI;

use super::offspring::SlackOffspring;
use crate::error::{invalid, Result};
use crate::regvar::TailIndex;

/// Brownian particles on `(0, d)`, killed at the boundary, branching at rate
/// `β` into Slack-distributed offspring placed at the parent's position.
///
/// Criticality `β(m − 1) = π²/(2d²)` fixes the offspring mean `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchingDiffusion1D {
    d: f64,
    beta: f64,
    law: SlackOffspring,
    grid_points: usize,
}

/// How a finite-difference grid is made critical.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridCriticality {
    /// Keep the continuum mean; the discrete operator is critical to `O(h²)`.
    Continuum,
    /// Re-solve `β(m − 1) = λ_1^h` with the discrete principal eigenvalue.
    Discrete,
}

impl BranchingDiffusion1D {
    pub fn critical(d: f64, beta: f64, alpha: TailIndex, c: f64, grid_points: usize) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(invalid("d", "domain length must be positive"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid("beta", "must be positive"));
        }
        if grid_points < 3 {
            return Err(invalid("grid_points", "need at least 3 interior nodes"));
        }
        let mean = 1.0 + principal_eigenvalue(d) / beta;
        let law = SlackOffspring::with_mean(alpha, c, mean)?;
        Ok(BranchingDiffusion1D {
            d,
            beta,
            law,
            grid_points,
        })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn law(&self) -> &SlackOffspring {
        &self.law
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    pub fn with_grid_points(&self, grid_points: usize) -> Self {
        BranchingDiffusion1D {
            grid_points,
            ..self.clone()
        }
    }

    /// `φ(x) = sin(πx/d)`.
    pub fn phi(&self, x: f64) -> f64 {
        (PI * x / self.d).sin()
    }

    pub fn grid(&self, criticality: GridCriticality) -> DiffusionGrid {
        let n = self.grid_points;
        let h = self.d / (n + 1) as f64;
        let lambda = match criticality {
            GridCriticality::Continuum => principal_eigenvalue(self.d),
            GridCriticality::Discrete => (1.0 - (PI * h / self.d).cos()) / (h * h),
        };
        DiffusionGrid {
            h,
            nodes: (1..=n).map(|i| i as f64 * h).collect(),
            growth: lambda,
            beta: self.beta,
            c: self.law.c(),
            alpha: self.law.alpha().get(),
        }
    }
}

/// `λ_1 = π²/(2d²)`.
pub fn principal_eigenvalue(d: f64) -> f64 {
    PI * PI / (2.0 * d * d)
}

/// Finite-difference version of the diffusion on interior nodes, with
/// generator `½Δ_h + β(m − 1)` and Dirichlet rows.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionGrid {
    pub h: f64,
    pub nodes: Vec<f64>,
    /// `β(m − 1)`.
    pub growth: f64,
    pub beta: f64,
    pub c: f64,
    pub alpha: f64,
}

impl DiffusionGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Off-diagonal and diagonal entries of the tridiagonal generator.
    pub fn stencil(&self) -> (f64, f64) {
        let off = 0.5 / (self.h * self.h);
        (off, -2.0 * off + self.growth)
    }

    pub fn generator(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let (off, diag) = self.stencil();
        nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag
            } else if i.abs_diff(j) == 1 {
                off
            } else {
                0.0
            }
        })
    }

    pub fn apply_generator(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        let (off, diag) = self.stencil();
        for i in 0..n {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < n { u[i + 1] } else { 0.0 };
            out[i] = diag * u[i] + off * (left + right);
        }
    }

    /// Local Slack branching: `A[g](x) = β c g(x)^{1+α}`.
    pub fn eval_a_into(&self, g: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(g) {
            *o = self.beta * self.c * v.clamp(0.0, 1.0).powf(1.0 + self.alpha);
        }
    }
}
