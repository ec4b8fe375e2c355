use super::{oracle, solve_at_with, solve_u_from, solve_v_multitype, Record, VInit};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::spectral::EigenTriplet;

/// Deterministic conditional Laplace functional at one `(θ, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct YaglomPoint {
    pub theta: f64,
    /// `θ' = θ ⟨f, φ̃⟩`.
    pub theta_eff: f64,
    pub t: f64,
    pub a_t: f64,
    /// Survival-form ratio per type: `u_t[e^{−θ a_t f}]/u_t` for particles,
    /// `(1 − e^{−V_t[θ a_t f]})/(1 − e^{−V_t})` for superprocesses.
    pub ratio: Vec<f64>,
    /// `V_t[θ a_t f]/V_t` for superprocesses.
    pub v_ratio: Option<Vec<f64>>,
    /// `E_{δx}[e^{−θ a_t ⟨f, X_t⟩} | ζ > t] = 1 − ratio`.
    pub conditional_lf: Vec<f64>,
    /// `θ'/(1 + θ'^α)^{1/α}`, the limit of `ratio`.
    pub limit: f64,
}

pub fn yaglom_ratio(
    model: &Model,
    triplet: &EigenTriplet,
    theta: f64,
    f_dir: &[f64],
    t: f64,
    dt: f64,
) -> Result<YaglomPoint> {
    Ok(yaglom_ratios(model, triplet, &[theta], f_dir, t, dt)?.remove(0))
}

pub fn yaglom_ratios(
    model: &Model,
    triplet: &EigenTriplet,
    thetas: &[f64],
    f_dir: &[f64],
    t: f64,
    dt: f64,
) -> Result<Vec<YaglomPoint>> {
    let n = model.dim();
    if f_dir.len() != n || f_dir.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain("f must be a finite non-negative direction".into()));
    }
    if thetas.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain("theta must be finite and non-negative".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Domain("t must be positive".into()));
    }
    let alpha = model.tail_index();
    let f_mass = triplet.pair_with_phi_tilde(f_dir);
    let build = |theta: f64, a_t: f64, ratio: Vec<f64>, v_ratio: Option<Vec<f64>>| {
        let theta_eff = theta * f_mass;
        YaglomPoint {
            theta,
            theta_eff,
            t,
            a_t,
            conditional_lf: ratio.iter().map(|r| 1.0 - r).collect(),
            ratio,
            v_ratio,
            limit: oracle::yaglom_limit(alpha, theta_eff),
        }
    };
    let survival_ratio = |num: f64, den: f64| (-(-num).exp_m1()) / (-(-den).exp_m1());

    match model {
        Model::StableCsbp(s) => {
            let (k, a) = (s.kappa, s.alpha.get());
            let v = oracle::stable_v(k, a, f64::INFINITY, t);
            let a_t = v * triplet.phi_tilde[0];
            Ok(thetas
                .iter()
                .map(|&theta| {
                    let vt = oracle::stable_v(k, a, theta * a_t * f_dir[0], t);
                    build(theta, a_t, vec![survival_ratio(vt, v)], Some(vec![vt / v]))
                })
                .collect())
        }
        Model::MultiTypeCsbp(_) => {
            let t0 = (0.5 * t).min(1.0);
            let base = solve_v_multitype(model, Some(triplet), &VInit::Infinite, t, dt, t0, Record::At(&[t]))?;
            let v = base.v.last().to_vec();
            let a_t = triplet.pair_with_phi_tilde(&v);
            let mut out = Vec::with_capacity(thetas.len());
            for &theta in thetas {
                let f: Vec<f64> = f_dir.iter().map(|x| theta * a_t * x).collect();
                let sol = solve_v_multitype(model, None, &VInit::Finite(f), t, dt, 0.0, Record::At(&[t]))?;
                let vt = sol.v.last();
                let ratio = vt.iter().zip(&v).map(|(a, b)| survival_ratio(*a, *b)).collect();
                let vr = vt.iter().zip(&v).map(|(a, b)| a / b).collect();
                out.push(build(theta, a_t, ratio, Some(vr)));
            }
            Ok(out)
        }
        _ => {
            let base = solve_at_with(model, triplet, t, dt, Record::At(&[t]))?;
            let u = base.u.last().to_vec();
            if let Some(small) = u.iter().find(|v| **v < 1e-300) {
                return Err(Error::DivisionByNegligible(*small));
            }
            let a_t = base.a.last()[0];
            let mut out = Vec::with_capacity(thetas.len());
            for &theta in thetas {
                let u0: Vec<f64> = f_dir.iter().map(|x| -(-theta * a_t * x).exp_m1()).collect();
                let sol = solve_u_from(model, &u0, t, dt, Record::At(&[t]))?;
                let ratio = sol.last().iter().zip(&u).map(|(a, b)| a / b).collect();
                out.push(build(theta, a_t, ratio, None));
            }
            Ok(out)
        }
    }
}
