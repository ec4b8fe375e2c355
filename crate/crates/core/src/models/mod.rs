//! Process definitions and their branching functionals.
//!
//! Particle systems expose `G` and `A`; superprocesses expose `J`. All
//! evaluations are exact expectations over the count law, never samples.

mod audit;
mod csbp;
mod diffusion;
mod gw;
mod levy;
mod offspring;

pub use audit::{audit_h1, audit_h4, audit_h5, H4Fit, DEFAULT_H4_SPREAD};
pub use csbp::{MultiTypeCSBP, StableCSBP};
pub use diffusion::{principal_eigenvalue, BranchingDiffusion1D, DiffusionGrid, GridCriticality};
pub use gw::MultiTypeGW;
pub use levy::LevyKernel;
pub use offspring::{power_excess, CountLaw, FiniteOffspring, SlackOffspring, DEFAULT_K_MAX};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// The five supported process classes.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    SingleTypeGw(MultiTypeGW),
    MultiTypeGw(MultiTypeGW),
    Diffusion(BranchingDiffusion1D),
    StableCsbp(StableCSBP),
    MultiTypeCsbp(MultiTypeCSBP),
}

impl Model {
    pub fn gw(gw: MultiTypeGW) -> Self {
        if gw.n_types() == 1 {
            Model::SingleTypeGw(gw)
        } else {
            Model::MultiTypeGw(gw)
        }
    }

    pub fn is_superprocess(&self) -> bool {
        matches!(self, Model::StableCsbp(_) | Model::MultiTypeCsbp(_))
    }

    /// Number of points in the (discretised) type space.
    pub fn dim(&self) -> usize {
        match self {
            Model::SingleTypeGw(g) | Model::MultiTypeGw(g) => g.n_types(),
            Model::Diffusion(d) => d.grid_points(),
            Model::StableCsbp(_) => 1,
            Model::MultiTypeCsbp(m) => m.n_types(),
        }
    }

    pub fn as_gw(&self) -> Option<&MultiTypeGW> {
        match self {
            Model::SingleTypeGw(g) | Model::MultiTypeGw(g) => Some(g),
            _ => None,
        }
    }

    /// The index `α` of the branching functional near zero.
    pub fn tail_index(&self) -> f64 {
        match self {
            Model::SingleTypeGw(g) | Model::MultiTypeGw(g) => {
                g.laws().iter().map(CountLaw::tail_index).fold(1.0, f64::min)
            }
            Model::Diffusion(d) => d.law().alpha().get(),
            Model::StableCsbp(s) => s.alpha.get(),
            Model::MultiTypeCsbp(m) => m
                .nu
                .iter()
                .chain(m.jump.iter())
                .filter_map(LevyKernel::tail_index)
                .fold(1.0, f64::min),
        }
    }

    pub fn generator(&self) -> DMatrix<f64> {
        match self {
            Model::SingleTypeGw(g) | Model::MultiTypeGw(g) => g.generator(),
            Model::Diffusion(d) => d.grid(GridCriticality::Discrete).generator(),
            Model::StableCsbp(_) => DMatrix::zeros(1, 1),
            Model::MultiTypeCsbp(m) => m.generator(),
        }
    }

    /// The nonlinear part of the evolution equation: `A` for particles, `J`
    /// for superprocesses.
    pub fn branching_functional(&self, g: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::SingleTypeGw(gw) | Model::MultiTypeGw(gw) => gw.eval_a(g),
            Model::Diffusion(d) => {
                gw::check_unit(g, d.grid_points())?;
                let grid = d.grid(GridCriticality::Discrete);
                let mut out = vec![0.0; g.len()];
                grid.eval_a_into(g, &mut out);
                Ok(out)
            }
            Model::StableCsbp(s) => eval_j(&Model::StableCsbp(*s), g),
            Model::MultiTypeCsbp(_) => eval_j(self, g),
        }
    }
}

/// `G[g]` for the Galton–Watson classes.
pub fn eval_g(model: &Model, g: &[f64]) -> Result<Vec<f64>> {
    match model {
        Model::SingleTypeGw(gw) | Model::MultiTypeGw(gw) => gw.eval_g(g),
        Model::Diffusion(d) => {
            gw::check_unit(g, d.grid_points())?;
            let law = d.law();
            Ok(g.iter().map(|&s| d.beta() * (law.pgf(s) - s)).collect())
        }
        _ => Err(Error::Domain("G is defined for particle systems only".into())),
    }
}

/// `A[g]` for particle systems.
pub fn eval_a(model: &Model, g: &[f64]) -> Result<Vec<f64>> {
    if model.is_superprocess() {
        return Err(Error::Domain("A is defined for particle systems only".into()));
    }
    model.branching_functional(g)
}

/// `J[h]` for superprocesses.
pub fn eval_j(model: &Model, h: &[f64]) -> Result<Vec<f64>> {
    match model {
        Model::StableCsbp(s) => {
            if h.len() != 1 || !(h[0] >= 0.0 && h[0].is_finite()) {
                return Err(Error::Domain("J needs one finite non-negative value".into()));
            }
            Ok(vec![s.psi(h[0])])
        }
        Model::MultiTypeCsbp(m) => m.eval_j(h),
        _ => Err(Error::Domain("J is defined for superprocesses only".into())),
    }
}
