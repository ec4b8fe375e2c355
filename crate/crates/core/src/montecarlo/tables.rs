//! Tabulated offspring Laplace factors for the conditional spine estimator.
//!
//! An extra child born at time `T` in state `x` contributes
//! `E[e^{−⟨b + λφ, X_{t−T}⟩}] = 1 − U_{t−T}(λ, x)` to `E[e^{−⟨b,X_t⟩−λY_t}]`
//! given the spine, so `E[e^{−⟨b,X_t⟩}/Y_t | spine]` becomes a
//! one-dimensional integral over `λ`.

use crate::error::{Error, Result};
use crate::evolution::{solve_u_from, Record};
use crate::models::Model;

/// Uniform age step up to [`AGE_KNEE`], then geometric growth.
const AGE_STEP: f64 = 0.02;
const AGE_KNEE: f64 = 2.0;
const AGE_RATIO: f64 = 1.01;
/// Step of the trapezoid rule in `ln λ`; the integrand is analytic in `ln λ`
/// so the rule converges geometrically.
const LOG_LAMBDA_STEP: f64 = 0.5;

/// Floor for stored logarithms so interpolation never meets `−∞`.
const LOG_FLOOR: f64 = -1e4;

#[derive(Clone, Debug)]
pub struct LaplaceTables {
    lambdas: Vec<f64>,
    /// Trapezoid weights in `ln λ`, already multiplied by `λ`.
    weights: Vec<f64>,
    lambda_min: f64,
    ages: Vec<f64>,
    n_geo_start: usize,
    /// Number of spatial columns (types, or grid nodes with boundaries).
    cols: usize,
    /// Grid spacing for a spatial model.
    spacing: Option<f64>,
    /// `ln(1 − U)` laid out as `[age][col][λ]`.
    data: Vec<f64>,
    /// Base function `b` at the columns (or nodes).
    base: Vec<f64>,
}

impl LaplaceTables {
    /// Tables for `b = base` (zero for plain survival) up to age `max_age`.
    ///
    /// `phi` and `base` are given per type for a GW model and per interior
    /// grid node for a diffusion. `lambda_max` should exceed the reciprocal
    /// of the smallest `φ`-mass of interest.
    pub fn build(
        model: &Model,
        phi: &[f64],
        base: &[f64],
        max_age: f64,
        lambda_max: f64,
        dt: f64,
    ) -> Result<Self> {
        let n = model.dim();
        if phi.len() != n || base.len() != n {
            return Err(Error::Domain("table inputs must have one entry per state".into()));
        }
        let (ages, n_geo_start) = age_grid(max_age);
        let lambda_min = 1e-10;
        let k = ((lambda_max / lambda_min).ln() / LOG_LAMBDA_STEP).ceil() as usize;
        let lambdas: Vec<f64> = (0..=k).map(|i| lambda_min * (i as f64 * LOG_LAMBDA_STEP).exp()).collect();
        let weights: Vec<f64> = lambdas
            .iter()
            .enumerate()
            .map(|(i, l)| l * LOG_LAMBDA_STEP * if i == 0 || i == k { 0.5 } else { 1.0 })
            .collect();
        let (cols, spacing, gw) = match model {
            Model::MultiTypeGw(g) | Model::SingleTypeGw(g) => (n, None, Some(g)),
            Model::Diffusion(d) => (n + 2, Some(d.d() / (n + 1) as f64), None),
            _ => return Err(Error::Domain("spine tables need a particle model".into())),
        };
        let nl = lambdas.len();
        let na = ages.len();
        let mut data = vec![0.0; na * cols * nl];
        for (l, &lambda) in lambdas.iter().enumerate() {
            let u0: Vec<f64> = (0..n).map(|j| -(-(base[j] + lambda * phi[j])).exp_m1()).collect();
            let tr = solve_u_from(model, &u0, max_age, dt, Record::At(&ages))?;
            for a in 0..na {
                let u = tr.value(a);
                let row = &mut data[a * cols * nl..(a + 1) * cols * nl];
                match gw {
                    Some(g) => {
                        for j in 0..n {
                            let q: f64 = g.displacement()[j].iter().zip(u).map(|(p, v)| p * (1.0 - v)).sum();
                            row[j * nl + l] = if a == 0 {
                                log_mix_exact(&g.displacement()[j], base, phi, lambda)
                            } else {
                                q.ln().max(LOG_FLOOR)
                            };
                        }
                    }
                    None => {
                        for j in 0..n {
                            row[(j + 1) * nl + l] =
                                (if a == 0 { -(base[j] + lambda * phi[j]) } else { (-u[j]).ln_1p() }).max(LOG_FLOOR);
                        }
                    }
                }
            }
        }
        let base_cols = match spacing {
            Some(_) => std::iter::once(0.0).chain(base.iter().copied()).chain(std::iter::once(0.0)).collect(),
            None => base.to_vec(),
        };
        Ok(LaplaceTables {
            lambdas,
            weights,
            lambda_min,
            ages,
            n_geo_start,
            cols,
            spacing,
            data,
            base: base_cols,
        })
    }

    pub fn n_lambda(&self) -> usize {
        self.lambdas.len()
    }

    pub fn max_age(&self) -> f64 {
        *self.ages.last().expect("non-empty")
    }

    /// Lower index and weight for linear interpolation in age.
    fn age_index(&self, s: f64) -> (usize, f64) {
        let last = self.ages.len() - 1;
        if s <= 0.0 {
            return (0, 0.0);
        }
        let i = if s < AGE_KNEE {
            (s / AGE_STEP) as usize
        } else {
            self.n_geo_start + ((s / AGE_KNEE).ln() / AGE_RATIO.ln()) as usize
        };
        let mut i = i.min(last - 1);
        while i > 0 && self.ages[i] > s {
            i -= 1;
        }
        while i + 1 < last && self.ages[i + 1] < s {
            i += 1;
        }
        let w = ((s - self.ages[i]) / (self.ages[i + 1] - self.ages[i])).clamp(0.0, 1.0);
        (i, w)
    }

    fn col_index(&self, x: f64) -> (usize, f64) {
        let h = self.spacing.expect("spatial table");
        let z = (x / h).clamp(0.0, (self.cols - 1) as f64);
        let i = (z as usize).min(self.cols - 2);
        (i, z - i as f64)
    }

    /// Add `weight · ln(1 − U_s(λ, col))` for every `λ` into `acc`.
    pub fn accumulate_type(&self, acc: &mut [f64], s: f64, col: usize, weight: f64) {
        let nl = self.lambdas.len();
        let (a, w) = self.age_index(s);
        let lo = &self.data[(a * self.cols + col) * nl..][..nl];
        let hi = &self.data[((a + 1) * self.cols + col) * nl..][..nl];
        for l in 0..nl {
            acc[l] += weight * (lo[l] + w * (hi[l] - lo[l]));
        }
    }

    /// Spatial version of [`Self::accumulate_type`], bilinear in age and `x`.
    pub fn accumulate_position(&self, acc: &mut [f64], s: f64, x: f64, weight: f64) {
        let nl = self.lambdas.len();
        let (a, wa) = self.age_index(s);
        let (c, wc) = self.col_index(x);
        let corners = [
            (a, c, (1.0 - wa) * (1.0 - wc)),
            (a, c + 1, (1.0 - wa) * wc),
            (a + 1, c, wa * (1.0 - wc)),
            (a + 1, c + 1, wa * wc),
        ];
        for (ai, ci, cw) in corners {
            if cw == 0.0 {
                continue;
            }
            let row = &self.data[(ai * self.cols + ci) * nl..][..nl];
            let k = weight * cw;
            for l in 0..nl {
                acc[l] += k * row[l];
            }
        }
    }

    /// Base value `b` at a type.
    pub fn base_type(&self, col: usize) -> f64 {
        self.base[col]
    }

    pub fn base_position(&self, x: f64) -> f64 {
        let (c, w) = self.col_index(x);
        self.base[c] + w * (self.base[c + 1] - self.base[c])
    }

    /// `∫_0^∞ exp(−b₀ − λφ₀ + acc(λ)) dλ` for the spine's own `b₀`, `φ₀`.
    pub fn integrate(&self, acc: &[f64], b0: f64, phi0: f64) -> f64 {
        let mut total = self.lambda_min * (-b0).exp();
        for l in 0..self.lambdas.len() {
            let e = -b0 - self.lambdas[l] * phi0 + acc[l];
            if e > -745.0 {
                total += self.weights[l] * e.exp();
            }
        }
        total
    }
}

fn log_mix_exact(row: &[f64], base: &[f64], phi: &[f64], lambda: f64) -> f64 {
    row.iter()
        .enumerate()
        .map(|(k, p)| p * (-(base[k] + lambda * phi[k])).exp())
        .sum::<f64>()
        .ln()
        .max(LOG_FLOOR)
}

/// Ages `0, Δ, 2Δ, …, knee` then geometric to `max_age`; returns the grid
/// and the index where geometric spacing starts.
fn age_grid(max_age: f64) -> (Vec<f64>, usize) {
    let n_uni = (AGE_KNEE / AGE_STEP).round() as usize;
    let mut ages: Vec<f64> = (0..=n_uni).map(|i| i as f64 * AGE_STEP).collect();
    let start = n_uni;
    let mut s = AGE_KNEE;
    while s < max_age {
        s *= AGE_RATIO;
        ages.push(s.min(max_age * (1.0 + 1e-9)));
    }
    if ages.len() < 2 {
        ages.push(AGE_STEP);
    }
    (ages, start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn age_lookup_brackets() {
        let (ages, start) = age_grid(500.0);
        let t = LaplaceTables {
            lambdas: vec![1.0],
            weights: vec![1.0],
            lambda_min: 0.0,
            ages: ages.clone(),
            n_geo_start: start,
            cols: 1,
            spacing: None,
            data: vec![0.0; ages.len()],
            base: vec![0.0],
        };
        for s in [0.0, 0.01, 1.99, 2.0, 2.5, 17.3, 499.9] {
            let (i, w) = t.age_index(s);
            assert!(ages[i] <= s + 1e-12 && s <= ages[i + 1] + 1e-12, "s = {s}");
            assert!((0.0..=1.0).contains(&w));
        }
    }
}
