//! Runnable checks of the moment, regular-variation and tail assumptions.

use super::Model;
use crate::error::{Error, Result};
use crate::regvar::{LogLogTable, SlowlyVarying, TailIndex};
use crate::spectral::EigenTriplet;

/// Result of fitting `⟨A[xφ], φ̃⟩ = x^{1+α} ℓ(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct H4Fit {
    pub alpha_hat: TailIndex,
    pub ell_hat: SlowlyVarying,
    /// `(min x, max x)` of the fit window.
    pub window: (f64, f64),
    /// Spread of the local log-log slopes across the window.
    pub slope_spread: f64,
}

/// Largest tolerated spread of local slopes before the fit is rejected.
pub const DEFAULT_H4_SPREAD: f64 = 0.05;

/// `sup_i E_i[N]`; `None` for superprocesses.
pub fn audit_h1(model: &Model) -> Option<f64> {
    match model {
        Model::SingleTypeGw(g) | Model::MultiTypeGw(g) => {
            Some(g.means().into_iter().fold(0.0, f64::max))
        }
        Model::Diffusion(d) => Some(d.law().mean()),
        _ => None,
    }
}

/// Fit the index and slowly varying factor of `x ↦ ⟨F[xφ], φ̃⟩` where `F`
/// is `A` or `J`.
pub fn audit_h4(
    model: &Model,
    triplet: &EigenTriplet,
    x_grid: &[f64],
    max_spread: f64,
) -> Result<H4Fit> {
    if x_grid.len() < 3 {
        return Err(Error::Fit("need at least three grid points".into()));
    }
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        if !(x > 0.0) {
            return Err(Error::Fit(format!("grid point {x} is not positive")));
        }
        let g: Vec<f64> = triplet.phi.iter().map(|p| x * p).collect();
        let v = triplet.pair_with_phi_tilde(&model.branching_functional(&g)?);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Fit(format!("functional is {v} at x = {x:e}")));
        }
        pts.push((x.ln(), v.ln()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let locals: Vec<f64> = pts.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let lo = locals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = locals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    if spread > max_spread {
        return Err(Error::Fit(format!(
            "local slopes range over [{lo:.4}, {hi:.4}]; not regularly varying on this window"
        )));
    }
    let mut alpha = slope - 1.0;
    if alpha > 1.0 && alpha < 1.0 + 1e-6 {
        alpha = 1.0;
    }
    let alpha_hat =
        TailIndex::new(alpha).map_err(|_| Error::Fit(format!("fitted index {alpha} outside (0, 1]")))?;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.exp()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| (p.1 - (1.0 + alpha) * p.0).exp()).collect();
    Ok(H4Fit {
        alpha_hat,
        ell_hat: SlowlyVarying::Tabulated {
            table: LogLogTable::new(xs.clone(), ys)?,
        },
        window: (xs[0], xs[xs.len() - 1]),
        slope_spread: spread,
    })
}

/// `sup_x (β(x)/φ(x)) E_x[(N−1)^δ Σ φ(x_i)]` for particles, and
/// `max_i ∫_1^∞ y^{1+δ} ν_i + β_i ⟨φ, π_i⟩/φ_i ∫ (1 ∨ u^δ) u Γ̃_i(du)` for
/// superprocesses.
pub fn audit_h5(model: &Model, triplet: &EigenTriplet, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta = {delta} outside (0, 1)")));
    }
    let phi = &triplet.phi;
    match model {
        Model::SingleTypeGw(g) | Model::MultiTypeGw(g) => {
            let dphi = g.displace(phi);
            let mut sup = 0.0f64;
            for i in 0..g.n_types() {
                let m = g.laws()[i].h5_moment(delta)?;
                sup = sup.max(g.beta()[i] / phi[i] * m * dphi[i]);
            }
            Ok(sup)
        }
        Model::Diffusion(d) => Ok(d.beta() * d.law().h5_moment(delta)?),
        Model::StableCsbp(s) => s.as_multitype().nu[0].large_jump_moment(1.0 + delta),
        Model::MultiTypeCsbp(m) => {
            let mut sup = 0.0f64;
            for i in 0..m.n_types() {
                let mut v = m.nu[i].large_jump_moment(1.0 + delta)?;
                if m.beta[i] > 0.0 {
                    let pphi: f64 = m.pi[i].iter().zip(phi).map(|(p, f)| p * f).sum();
                    v += m.beta[i] * pphi / phi[i] * m.jump[i].h5_weight(delta)?;
                }
                sup = sup.max(v);
            }
            Ok(sup)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{MultiTypeGW, SlackOffspring, StableCSBP};
    use crate::regvar::log_grid;
    use crate::spectral::{eigen_triplet, generator_l};

    fn triplet(m: &Model) -> EigenTriplet {
        eigen_triplet(&generator_l(m)).unwrap()
    }

    #[test]
    fn slack_single_type_recovers_parameters() {
        let law = SlackOffspring::new(TailIndex::new(0.5).unwrap(), 0.4).unwrap();
        let m = Model::gw(MultiTypeGW::slack_single(1.0, law).unwrap());
        let fit = audit_h4(&m, &triplet(&m), &log_grid(1e-6, 1e-2, 4), DEFAULT_H4_SPREAD).unwrap();
        assert!((fit.alpha_hat.get() - 0.5).abs() < 1e-3);
        assert!((fit.ell_hat.eval(1e-4) - 0.4).abs() < 1e-3);
    }

    #[test]
    fn binary_is_finite_variance() {
        let m = Model::gw(MultiTypeGW::binary_single(2.0));
        let fit = audit_h4(&m, &triplet(&m), &log_grid(1e-6, 1e-2, 4), DEFAULT_H4_SPREAD).unwrap();
        assert_eq!(fit.alpha_hat.get(), 1.0);
        // β/2 · ⟨φ³, φ̃⟩ = 1 with φ = φ̃ = 1.
        assert!((fit.ell_hat.eval(1e-6) - 1.0).abs() < 1e-5);
        assert!((audit_h5(&Model::gw(MultiTypeGW::binary_single(1.0)), &triplet(&m), 0.5).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stable_csbp_audits() {
        let m = Model::StableCsbp(StableCSBP::new(2.0, TailIndex::new(0.5).unwrap()).unwrap());
        let t = triplet(&m);
        let fit = audit_h4(&m, &t, &log_grid(1e-6, 1e-2, 4), DEFAULT_H4_SPREAD).unwrap();
        assert!((fit.alpha_hat.get() - 0.5).abs() < 1e-9);
        assert!((fit.ell_hat.eval(1e-3) - 2.0).abs() < 1e-9);
        assert!(audit_h5(&m, &t, 0.25).unwrap().is_finite());
        assert!(matches!(audit_h5(&m, &t, 0.75), Err(Error::Diverges(_))));
    }

    #[test]
    fn mixed_orders_are_rejected() {
        // c x^{1.5} and x²/2 cross inside the window, so no single index fits.
        use crate::models::{CountLaw, FiniteOffspring};
        let slack = SlackOffspring::new(TailIndex::new(0.5).unwrap(), 1e-3).unwrap();
        let gw = MultiTypeGW::new(
            vec![1.0, 1.0],
            vec![CountLaw::Slack(slack), CountLaw::Finite(FiniteOffspring::binary())],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        )
        .unwrap();
        let m = Model::gw(gw);
        let fit = audit_h4(&m, &triplet(&m), &log_grid(1e-8, 1.0, 2), DEFAULT_H4_SPREAD);
        assert!(matches!(fit, Err(Error::Fit(_))));
    }
}
