//! Analytic solutions for the worked examples. These are the oracles the
//! quadrature-based solver is tested against, so nothing here calls into
//! `dual_solver` or `primal_solver`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{derived_constants, MarketParams};
use crate::normal::{cdf, pdf, quantile, sf};

/// Reference values at one point; fields that do not apply are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ReferencePoint {
    pub tau: f64,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub v: Option<f64>,
    pub v_y: Option<f64>,
    pub u: Option<f64>,
    pub amount: Option<f64>,
    pub pi_frac: Option<f64>,
    /// Saturation wealth `H e^{-rτ}` (capped utility).
    pub boundary: Option<f64>,
    pub exact_error: Option<f64>,
    pub sharp_bound: Option<f64>,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Power utility `x^p / p`: `v = -(1/q) y^q e^{λτ}` and the conjugate primal side.
pub fn merton_reference(market: &MarketParams, p: f64, tau: f64, x: f64) -> Result<ReferencePoint> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(format!("p must lie in (0,1), got {p}")));
    }
    check_positive("x", x)?;
    let q = p / (p - 1.0);
    let lam = derived_constants(market, q)?.lambda;
    let y = x.powf(1.0 / (q - 1.0)) * (-lam * tau / (q - 1.0)).exp();
    let v = -y.powf(q) * (lam * tau).exp() / q;
    let v_y = -y.powf(q - 1.0) * (lam * tau).exp();
    let pi = market.theta / ((1.0 - p) * market.sigma);
    Ok(ReferencePoint {
        tau,
        x: Some(x),
        y: Some(y),
        v: Some(v),
        v_y: Some(v_y),
        u: Some(v + x * y),
        amount: Some(pi * x),
        pi_frac: Some(pi),
        ..Default::default()
    })
}

/// Dual side of the capped utility: `v = H(Φ(k) - y e^{-rτ} Φ(k - θ√τ))`,
/// `v_y = -H e^{-rτ} Φ(k - θ√τ)`, with `k = ((r + θ²/2)τ - ln y)/(θ√τ)`.
pub fn capped_dual(market: &MarketParams, h: f64, tau: f64, y: f64) -> Result<(f64, f64)> {
    check_positive("H", h)?;
    check_positive("tau", tau)?;
    check_positive("y", y)?;
    let s = market.theta * tau.sqrt();
    let k = ((market.r + 0.5 * market.theta * market.theta) * tau - y.ln()) / s;
    let disc = (-market.r * tau).exp();
    Ok((h * (cdf(k) - y * disc * cdf(k - s)), -h * disc * cdf(k - s)))
}

/// Capped utility `min(x, H)` on the primal side, with `y(x)` and the dual
/// values at that `y` in the interior.
pub fn capped_reference(market: &MarketParams, h: f64, tau: f64, x: f64) -> Result<ReferencePoint> {
    check_positive("H", h)?;
    check_positive("tau", tau)?;
    check_positive("x", x)?;
    let boundary = h * (-market.r * tau).exp();
    if x >= boundary {
        return Ok(ReferencePoint {
            tau,
            x: Some(x),
            y: Some(0.0),
            u: Some(h),
            amount: Some(0.0),
            pi_frac: Some(0.0),
            boundary: Some(boundary),
            ..Default::default()
        });
    }
    let th = market.theta;
    let s = th * tau.sqrt();
    let z = quantile(x / boundary);
    let y = (market.r * tau - 0.5 * th * th * tau - s * z).exp();
    let (v, v_y) = capped_dual(market, h, tau, y)?;
    let amount = boundary / (market.sigma * tau.sqrt()) * pdf(z);
    Ok(ReferencePoint {
        tau,
        x: Some(x),
        y: Some(y),
        v: Some(v),
        v_y: Some(v_y),
        u: Some(h * cdf(z + s)),
        amount: Some(amount),
        pi_frac: Some(amount / x),
        boundary: Some(boundary),
        ..Default::default()
    })
}

/// `(P(X_T = 0), E[U(X_T)])` under the optimal capped policy from wealth `x`.
pub fn capped_ruin_prob(market: &MarketParams, h: f64, horizon: f64, x: f64) -> Result<(f64, f64)> {
    check_positive("H", h)?;
    check_positive("T", horizon)?;
    check_positive("x", x)?;
    let ratio = x * (market.r * horizon).exp() / h;
    if ratio >= 1.0 {
        return Ok((0.0, h));
    }
    let z = quantile(ratio);
    let s = market.theta * horizon.sqrt();
    Ok((cdf(-z - s), h * cdf(z + s)))
}

/// `Φ(b) - Φ(a)` for `a ≤ b`, taken from whichever tail avoids cancellation.
fn cdf_diff(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        sf(a) - sf(b)
    } else {
        cdf(b) - cdf(a)
    }
}

/// Dual value and slope for the two-branch utility `x ∧ H`, `H(x/H)^p`.
///
/// With `s = θ√τ`, `c₁ = (ln y - rτ)/s - s/2`, `c₂ = c₁ - ln p / s`,
/// `p₁ = 1 - p`, `q = -p/p₁`:
/// `v = H(A' y^q e^{λτ} Φ(-c₂ + s p/p₁) + Φ(c₂) - Φ(c₁) - y e^{-rτ}(Φ(c₂+s) - Φ(c₁+s)))`
/// where `A' = (p₁/p) p^{1/p₁}`.
pub fn piecewise_reference(market: &MarketParams, h: f64, p: f64, tau: f64, y: f64) -> Result<(f64, f64)> {
    check_positive("H", h)?;
    check_positive("tau", tau)?;
    check_positive("y", y)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(format!("p must lie in (0,1), got {p}")));
    }
    let p1 = 1.0 - p;
    let q = -p / p1;
    let lam = derived_constants(market, q)?.lambda;
    let s = market.theta * tau.sqrt();
    let c1 = (y.ln() - market.r * tau) / s - 0.5 * s;
    let c2 = c1 - p.ln() / s;
    let disc = (-market.r * tau).exp();
    let tail = cdf(-c2 + s * p / p1) * (lam * tau).exp();
    let a_prime = (p1 / p) * p.powf(1.0 / p1);
    let v = h * (a_prime * y.powf(q) * tail + cdf_diff(c1, c2) - y * disc * cdf_diff(c1 + s, c2 + s));
    let v_y = h * (-disc * cdf_diff(c1 + s, c2 + s) - (y / p).powf(1.0 / (p - 1.0)) * tail);
    Ok((v, v_y))
}

/// The inverse-quartic example: `V = y^{-3}/3 + y^{-1}`.
///
/// `y` comes from the explicit radical
/// `y² = (e^{(r+θ²)t} + sqrt(e^{2(r+θ²)t} + 4x e^{3(r+2θ²)t})) / (2x)`,
/// never from iteration.
pub fn ex4_reference(market: &MarketParams, t: f64, x: f64) -> Result<ReferencePoint> {
    check_positive("x", x)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t must be non-negative, got {t}")));
    }
    let (r, th) = (market.r, market.theta);
    let th2 = th * th;
    let e1 = ((r + th2) * t).exp();
    let e3 = (3.0 * (r + 2.0 * th2) * t).exp();
    let y = ((e1 + (e1 * e1 + 4.0 * x * e3).sqrt()) / (2.0 * x)).sqrt();
    let v = e3 * y.powi(-3) / 3.0 + e1 / y;
    let v_y = -e3 * y.powi(-4) - e1 * y.powi(-2);
    let v_yy = 4.0 * e3 * y.powi(-5) + 2.0 * e1 * y.powi(-3);
    let ts = market.theta_over_sigma();
    let amount = ts * y * v_yy;
    let exact_error = ts * 4.0 * x / (1.0 + (1.0 + 4.0 * x * ((r + 4.0 * th2) * t).exp()).sqrt());
    let sharp_bound = 2.0 * ts * x.sqrt() * (-(0.5 * r + 2.0 * th2) * t).exp();
    Ok(ReferencePoint {
        tau: t,
        x: Some(x),
        y: Some(y),
        v: Some(v),
        v_y: Some(v_y),
        u: Some(2.0 / 3.0 * (e1 / y + 2.0 * x * y)),
        amount: Some(amount),
        pi_frac: Some(amount / x),
        exact_error: Some(exact_error),
        sharp_bound: Some(sharp_bound),
        ..Default::default()
    })
}

/// Allocation for `U = 1 - e^{-x}` at dual state `y`:
/// `(θ/σ) e^{-rτ} Φ(-k - θ√τ)` with `k = (ln y - (r + θ²/2)τ)/(θ√τ)`.
pub fn ex5_allocation(market: &MarketParams, tau: f64, y: f64) -> Result<f64> {
    check_positive("tau", tau)?;
    check_positive("y", y)?;
    let s = market.theta * tau.sqrt();
    let k = (y.ln() - (market.r + 0.5 * market.theta * market.theta) * tau) / s;
    Ok(market.theta_over_sigma() * (-market.r * tau).exp() * cdf(-k - s))
}

/// Relative risk aversion and the probe `q ↦ x U'(x)^{1-q}` for the
/// log-power utility, which has `R(x) → 1 - p` yet no power limit.
pub struct Ex400 {
    pub risk_aversion: f64,
    pub probe: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

pub fn ex400_diagnostics(p: f64, x: f64) -> Result<Ex400> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(format!("p must lie in (0,1), got {p}")));
    }
    check_positive("x", x)?;
    let xbar = (1.0 / (1.0 - p)).exp();
    let lx = x.ln();
    let risk_aversion = if x <= xbar { 0.0 } else { -(p * (p - 1.0) * lx + 2.0 * p - 1.0) / (p * lx + 1.0) };
    let probe: Box<dyn Fn(f64) -> f64 + Send + Sync> = if x >= xbar {
        Box::new(move |q: f64| x.powf((p - 1.0) * (1.0 - q) + 1.0) * (p * lx + 1.0).powf(1.0 - q))
    } else {
        let slope = 1.0 / ((1.0 - p) * std::f64::consts::E);
        Box::new(move |q: f64| x * slope.powf(1.0 - q))
    };
    Ok(Ex400 { risk_aversion, probe })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mkt() -> MarketParams {
        MarketParams::new(0.05, 0.10, 0.2).unwrap()
    }

    #[test]
    fn merton_examples() {
        let r = merton_reference(&mkt(), 0.5, 1.0, 1.0).unwrap();
        assert!((r.u.unwrap() - 2.0 * 0.05625f64.exp()).abs() < 1e-14);
        assert_eq!(r.pi_frac, Some(2.5));
        let r = merton_reference(&mkt(), 0.5, 0.0, 4.0).unwrap();
        assert!((r.u.unwrap() - 4.0).abs() < 1e-14);
        let r = merton_reference(&mkt(), 0.5, 1.0, 0.1125f64.exp()).unwrap();
        assert!((r.y.unwrap() - 1.0).abs() < 1e-14 && (r.v.unwrap() - 0.1125f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn capped_examples() {
        let x = 0.5 * (-0.05f64).exp();
        let r = capped_reference(&mkt(), 1.0, 1.0, x).unwrap();
        assert!((r.u.unwrap() - cdf(0.25)).abs() < 1e-15);
        assert!((r.amount.unwrap() - (-0.05f64).exp() * pdf(0.0) / 0.2).abs() < 1e-14);
        let r = capped_reference(&mkt(), 1.0, 1.0, 0.96).unwrap();
        assert_eq!((r.u, r.amount), (Some(1.0), Some(0.0)));
        let (v, vy) = capped_dual(&mkt(), 1.0, 1.0, 1.0).unwrap();
        assert!((v - 0.123360).abs() < 1e-6 && (vy + 0.504049).abs() < 1e-6);
        // the primal-side y maps back to x
        let r = capped_reference(&mkt(), 1.0, 1.0, 0.3).unwrap();
        assert!((r.v_y.unwrap() + 0.3).abs() < 1e-14);
    }

    #[test]
    fn ruin_examples() {
        let (ruin, value) = capped_ruin_prob(&mkt(), 1.0, 1.0, 0.5).unwrap();
        assert!((ruin - 0.3767).abs() < 1e-4 && (value - 0.6233).abs() < 1e-4);
        assert!((ruin + value - 1.0).abs() < 1e-15);
        let (ruin, _) = capped_ruin_prob(&mkt(), 1.0, 1.0, (-0.05f64).exp() * (1.0 - 1e-12)).unwrap();
        assert!(ruin < 1e-5);
        let steep = MarketParams::with_theta(0.05, 50.0, 0.2).unwrap();
        let (ruin, value) = capped_ruin_prob(&steep, 1.0, 1.0, 0.5).unwrap();
        assert!(ruin < 1e-12 && (value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn piecewise_limits() {
        let (v, _) = piecewise_reference(&mkt(), 1.0, 0.5, 1e-10, 0.5).unwrap();
        assert!((v - 0.5).abs() < 1e-4);
        let (v, _) = piecewise_reference(&mkt(), 1.0, 0.5, 1e-10, 2.0).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn ex4_examples() {
        let r = ex4_reference(&mkt(), 0.0, 1.0).unwrap();
        assert!((r.y.unwrap() - 1.272_019_649_514_069).abs() < 1e-12);
        // u(0, x) = U(x) = V(y) + x y
        let y = r.y.unwrap();
        assert!((r.u.unwrap() - (y.powi(-3) / 3.0 + 1.0 / y + y)).abs() < 1e-14);
        assert!((r.exact_error.unwrap() - 1.545_084_971_874_737).abs() < 1e-12);
        let r = ex4_reference(&mkt(), 8.0, 1.0).unwrap();
        assert!((r.exact_error.unwrap() - 0.64807).abs() < 1e-5);
        assert!((r.sharp_bound.unwrap() - 2.5 * (-1.2f64).exp()).abs() < 1e-14);
        assert!(r.exact_error <= r.sharp_bound);
        // error through the allocation agrees with the closed expression
        assert!(((5.0 * 1.0 - r.amount.unwrap()) - r.exact_error.unwrap()).abs() < 1e-12);
        assert!(ex4_reference(&mkt(), 3.0, 1e-12).unwrap().exact_error.unwrap() < 1e-10);
    }

    #[test]
    fn ex5_examples() {
        let a = ex5_allocation(&mkt(), 1.0, 1.0).unwrap();
        assert!((a - 1.25 * (-0.05f64).exp() * cdf(0.075)).abs() < 1e-15);
        assert!((a - 0.630062).abs() < 1e-6);
        assert!(ex5_allocation(&mkt(), 2000.0, 1.0).unwrap() < 1e-12);
    }

    #[test]
    fn ex400_examples() {
        assert_eq!(ex400_diagnostics(0.5, 5.0).unwrap().risk_aversion, 0.0);
        let r = ex400_diagnostics(0.5, 1e300).unwrap().risk_aversion;
        assert!((r - 0.5).abs() < 0.01);
        // at q = p/(p-1) the x-power vanishes and (p ln x + 1)^{1-q} diverges
        let vals: Vec<f64> = [2.0, 4.0, 8.0]
            .iter()
            .map(|l: &f64| (ex400_diagnostics(0.5, l.exp()).unwrap().probe)(-1.0))
            .collect();
        assert!(vals[0] < vals[1] && vals[1] < vals[2]);
        // below p/(p-1) the probe decays to zero
        let vals: Vec<f64> = [8.0, 16.0, 32.0, 128.0]
            .iter()
            .map(|l: &f64| (ex400_diagnostics(0.5, l.exp()).unwrap().probe)(-2.0))
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]) && vals[3] < 1e-10);
    }
}
