use crate::error::Result;
use crate::models::{DiffusionGrid, GridCriticality, Model, MultiTypeCSBP, MultiTypeGW, StableCSBP};

enum Linear {
    Dense { n: usize, m: Vec<f64> },
    Tridiagonal { off: f64, diag: f64 },
    Zero,
}

enum Nonlinear<'a> {
    Gw(&'a MultiTypeGW),
    Grid(DiffusionGrid),
    Stable(StableCSBP),
    Csbp(&'a MultiTypeCSBP),
}

/// Right-hand side `x ↦ L x − F[x]` of a semilinear evolution equation,
/// optionally augmented with `b' = −⟨F[x], w⟩`.
pub struct Rhs<'a> {
    linear: Linear,
    nonlinear: Nonlinear<'a>,
    mass: Option<Vec<f64>>,
    n: usize,
}

impl<'a> Rhs<'a> {
    pub fn new(model: &'a Model) -> Result<Self> {
        let n = model.dim();
        let dense = |l: nalgebra::DMatrix<f64>| Linear::Dense {
            n,
            m: (0..n * n).map(|k| l[(k / n, k % n)]).collect(),
        };
        let (linear, nonlinear) = match model {
            Model::SingleTypeGw(g) | Model::MultiTypeGw(g) => (dense(g.generator()), Nonlinear::Gw(g)),
            Model::Diffusion(d) => {
                let grid = d.grid(GridCriticality::Discrete);
                let (off, diag) = grid.stencil();
                (Linear::Tridiagonal { off, diag }, Nonlinear::Grid(grid))
            }
            Model::StableCsbp(s) => (Linear::Zero, Nonlinear::Stable(*s)),
            Model::MultiTypeCsbp(m) => {
                m.validate()?;
                (dense(m.generator()), Nonlinear::Csbp(m))
            }
        };
        Ok(Rhs {
            linear,
            nonlinear,
            mass: None,
            n,
        })
    }

    pub fn with_mass_integral(mut self, weights: Vec<f64>) -> Self {
        self.mass = Some(weights);
        self
    }

    /// Length of the state vector, including the augmented component.
    pub fn len(&self) -> usize {
        self.n + usize::from(self.mass.is_some())
    }

    /// Length without the augmented component.
    pub fn state_len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest step at which RK4 damps the stiffest linear mode by at least
    /// a factor of three; unbounded for non-spatial models.
    pub fn max_stable_step(&self) -> f64 {
        match self.linear {
            // Spectrum of the stencil lies in `diag ± 2·off`.
            Linear::Tridiagonal { off, .. } => 2.0 / (4.0 * off.abs()),
            _ => f64::INFINITY,
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        let (u, du) = (&x[..n], &mut out[..n]);
        match &self.nonlinear {
            Nonlinear::Gw(g) => g.eval_a_into(u, du),
            Nonlinear::Grid(grid) => grid.eval_a_into(u, du),
            Nonlinear::Stable(s) => du[0] = s.psi(u[0].max(0.0)),
            Nonlinear::Csbp(m) => m.eval_j_into(u, du)?,
        }
        if let Some(w) = &self.mass {
            out[n] = -w.iter().zip(out[..n].iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        let du = &mut out[..n];
        match &self.linear {
            Linear::Dense { n, m } => {
                for i in 0..*n {
                    let row = &m[i * n..(i + 1) * n];
                    let lu: f64 = row.iter().zip(u).map(|(a, b)| a * b).sum();
                    du[i] = lu - du[i];
                }
            }
            Linear::Tridiagonal { off, diag } => {
                for i in 0..n {
                    let left = if i > 0 { u[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                    du[i] = diag * u[i] + off * (left + right) - du[i];
                }
            }
            Linear::Zero => {
                for v in du.iter_mut() {
                    *v = -*v;
                }
            }
        }
        Ok(())
    }

    pub fn stepper(&self) -> Rk4 {
        Rk4::new(self.len())
    }
}

/// Classical fourth-order Runge–Kutta with reusable stage buffers.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    pub fn step(&mut self, rhs: &Rhs, x: &mut [f64], h: f64) -> Result<()> {
        let n = x.len();
        rhs.eval(x, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        rhs.eval(&self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        rhs.eval(&self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        rhs.eval(&self.tmp, &mut self.k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        Ok(())
    }
}
