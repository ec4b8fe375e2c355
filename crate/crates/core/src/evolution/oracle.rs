//! Closed forms used as independent references.

/// Single-type Slack survival `(1 + αβc t)^{-1/α}`.
pub fn slack_survival(alpha: f64, beta: f64, c: f64, t: f64) -> f64 {
    (1.0 + alpha * beta * c * t).powf(-1.0 / alpha)
}

/// Single-type Slack semigroup `u_t[g]` for a constant initial `u_0`:
/// `(u_0^{-α} + αβc t)^{-1/α}`.
pub fn slack_semigroup(alpha: f64, beta: f64, c: f64, u0: f64, t: f64) -> f64 {
    if u0 == 0.0 {
        return 0.0;
    }
    (u0.powf(-alpha) + alpha * beta * c * t).powf(-1.0 / alpha)
}

/// Binary branching (`p_0 = p_2 = ½`) survival `(1 + βt/2)^{-1}`.
pub fn binary_survival(beta: f64, t: f64) -> f64 {
    1.0 / (1.0 + 0.5 * beta * t)
}

/// Stable CSBP flow `(θ^{-α} + ακt)^{-1/α}`; `θ = ∞` allowed.
pub fn stable_v(kappa: f64, alpha: f64, theta: f64, t: f64) -> f64 {
    let inv = if theta.is_infinite() { 0.0 } else { theta.powf(-alpha) };
    (inv + alpha * kappa * t).powf(-1.0 / alpha)
}

/// Yaglom limit of the survival ratio, `θ'/(1 + θ'^α)^{1/α}`.
pub fn yaglom_limit(alpha: f64, theta_eff: f64) -> f64 {
    if theta_eff == 0.0 {
        return 0.0;
    }
    theta_eff / (1.0 + theta_eff.powf(alpha)).powf(1.0 / alpha)
}

/// Conditional Laplace functional in the limit, `1 − θ'/(1 + θ'^α)^{1/α}`.
pub fn yaglom_laplace(alpha: f64, theta_eff: f64) -> f64 {
    1.0 - yaglom_limit(alpha, theta_eff)
}
