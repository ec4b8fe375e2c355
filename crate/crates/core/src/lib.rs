//! Critical branching processes with regularly varying, infinite-variance
//! branching.
//!
//! The crate covers three layers. [`models`] and [`spectral`] define the
//! processes and their mean semigroups. [`evolution`] and [`montecarlo`]
//! solve and simulate them. [`verify`] turns the output into verdicts on the
//! Kolmogorov survival asymptotic and the Yaglom conditional limit.

pub mod error;
pub mod evolution;
pub mod models;
pub mod montecarlo;
pub mod quad;
pub mod regvar;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
