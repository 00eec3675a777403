//! Primal value, optimal allocation and HJB residuals recovered from a
//! [`DualSurface`] through `u(τ, x) = v(τ, y) + x y` with `v_y(τ, y) = -x`.

use serde::Serialize;

use crate::dual_solver::DualSurface;
use crate::error::{Error, Result};

const MAX_EXPANSIONS: usize = 200;
const MAX_REFINE: usize = 200;
/// Finite-difference step in `τ` for the HJB residuals.
const TAU_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Saturated,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Interior => "interior",
            Region::Saturated => "saturated",
        }
    }
}

/// The primal state at one `(τ, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrimalPoint {
    pub tau: f64,
    pub x: f64,
    pub region: Region,
    /// Dual state; zero in the saturated region.
    pub y: f64,
    pub u: f64,
    pub u_x: f64,
    /// Optimal amount held in the risky asset.
    pub amount: f64,
    pub pi_frac: f64,
}

/// `-v_y(τ, 0)`, the wealth at which the value saturates; `+∞` when `V'(0) = -∞`.
pub fn saturation_boundary(surface: &DualSurface, tau: f64) -> f64 {
    -surface.boundary_limits(tau).1.to_f64()
}

/// Solve `v_y(τ, y) = -x` for `y`.
///
/// Bisection in `ln y` with an expanding bracket, switching to a
/// bracket-safeguarded Newton step once the bracket is narrower than 1e-3 in
/// relative terms. Stops when `|v_y + x| <= 1e-10 (1 + x)`.
pub fn invert_marginal(surface: &DualSurface, tau: f64, x: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("inversion needs tau > 0, got {tau}")));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("wealth must be positive, got {x}")));
    }
    let boundary = saturation_boundary(surface, tau);
    if x >= boundary {
        return Err(Error::Region { x, boundary });
    }
    let tol = 1e-10 * (1.0 + x);
    let f = |t: f64| -> Result<f64> { Ok(surface.eval_vy(tau, t.exp())? + x) };

    let c = &surface.constants;
    let t0 = match surface.class.q {
        Some(q) if q < 0.0 && surface.dual.known_q().is_some() => (x.ln() - c.lambda * tau) / (q - 1.0),
        _ => 0.0,
    };
    let f0 = f(t0)?;
    if f0.abs() <= tol {
        return Ok(t0.exp());
    }
    // f is increasing in t; expand away from t0 until the sign flips
    let (mut lo, mut hi, mut flo, mut fhi) = (t0, t0, f0, f0);
    let dir = if f0 < 0.0 { 1.0 } else { -1.0 };
    let mut step = 0.5f64;
    let mut found = false;
    for _ in 0..MAX_EXPANSIONS {
        let t = if dir > 0.0 { hi + step } else { lo - step };
        if t.abs() > 700.0 {
            break;
        }
        let ft = f(t)?;
        if dir > 0.0 {
            lo = hi;
            flo = fhi;
            hi = t;
            fhi = ft;
        } else {
            hi = lo;
            fhi = flo;
            lo = t;
            flo = ft;
        }
        if flo <= 0.0 && fhi >= 0.0 {
            found = true;
            break;
        }
        step = (2.0 * step).min(10.0);
    }
    if !found {
        return Err(Error::Bracket(format!(
            "no sign change of v_y + x for x = {x} at tau = {tau} within {MAX_EXPANSIONS} expansions"
        )));
    }
    if flo.abs() <= tol {
        return Ok(lo.exp());
    }
    if fhi.abs() <= tol {
        return Ok(hi.exp());
    }

    let mut t = 0.5 * (lo + hi);
    for _ in 0..MAX_REFINE {
        let ft = f(t)?;
        if ft.abs() <= tol {
            return Ok(t.exp());
        }
        if ft < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo < 1e-15 * (1.0 + t.abs()) {
            break;
        }
        let mut next = 0.5 * (lo + hi);
        if hi - lo < 1e-3 {
            // d/dt v_y(τ, e^t) = y v_yy
            let y = t.exp();
            let slope = y * surface.eval_vyy(tau, y)?;
            let newton = t - ft / slope;
            if slope > 0.0 && newton > lo && newton < hi {
                next = newton;
            }
        }
        t = next;
    }
    let y = t.exp();
    let resid = (surface.eval_vy(tau, y)? + x).abs();
    if resid <= tol {
        Ok(y)
    } else {
        Err(Error::Convergence(format!("v_y + x = {resid:e} at x = {x}, tau = {tau} after refinement")))
    }
}

/// The full primal point at `(τ, x)`.
///
/// At `τ = 0` the primal utility is used directly when the surface carries
/// one; the allocation there is `-(θ/σ) U'/U''` where `U''` exists and NaN
/// at kinks.
pub fn value_u(surface: &DualSurface, tau: f64, x: f64) -> Result<PrimalPoint> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("wealth must be positive, got {x}")));
    }
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("tau must be non-negative, got {tau}")));
    }
    let ts = surface.market.theta_over_sigma();
    let boundary = saturation_boundary(surface, tau);
    if x >= boundary {
        let u = surface.dual.v0().finite().ok_or_else(|| {
            Error::Degenerate("finite saturation boundary with infinite V(0)".into())
        })?;
        return Ok(PrimalPoint { tau, x, region: Region::Saturated, y: 0.0, u, u_x: 0.0, amount: 0.0, pi_frac: 0.0 });
    }
    if tau == 0.0 {
        return terminal_point(surface, x);
    }
    let y = invert_marginal(surface, tau, x)?;
    let v = surface.eval_v(tau, y)?;
    let vyy = surface.eval_vyy(tau, y)?;
    let amount = ts * y * vyy;
    Ok(PrimalPoint {
        tau,
        x,
        region: Region::Interior,
        y,
        u: v + x * y,
        u_x: y,
        amount,
        pi_frac: amount / x,
    })
}

fn terminal_point(surface: &DualSurface, x: f64) -> Result<PrimalPoint> {
    let ts = surface.market.theta_over_sigma();
    let (u, y, amount) = match &surface.utility {
        Some(util) => {
            let (lo, _) = util.superdifferential(x)?;
            let amount = util.second_derivative(x).map_or(f64::NAN, |d2| -ts * lo / d2);
            (util.eval(x)?, lo, amount)
        }
        None => {
            // invert V'(y) = -x directly; needs a differentiable dual
            let mut lo = -700.0f64;
            let mut hi = 700.0f64;
            let d = |t: f64| surface.dual.derivative(t.exp()).map(|d| d + x);
            if d(0.0).is_none() {
                return Err(Error::Precondition("terminal point needs V' or the primal utility".into()));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if d(mid).unwrap_or(f64::NAN) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let y = (0.5 * (lo + hi)).exp();
            let amount = surface.dual.second_derivative(y).map_or(f64::NAN, |v2| ts * y * v2);
            (surface.dual.eval(y)? + x * y, y, amount)
        }
    };
    Ok(PrimalPoint { tau: 0.0, x, region: Region::Interior, y, u, u_x: y, amount, pi_frac: amount / x })
}

/// `(A, A/x)` with `A = (θ/σ) y v_yy(τ, y)` in the interior and 0 when saturated.
pub fn allocation(surface: &DualSurface, tau: f64, x: f64) -> Result<(f64, f64)> {
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("allocation needs tau > 0, got {tau}")));
    }
    let p = value_u(surface, tau, x)?;
    Ok((p.amount, p.pi_frac))
}

/// The same allocation written on the primal side, `-(θ/σ) u_x / u_xx`, with
/// `u_xx = -1 / v_yy` from the inverse-function rule.
pub fn allocation_primal_form(surface: &DualSurface, tau: f64, x: f64) -> Result<f64> {
    let p = value_u(surface, tau, x)?;
    if p.region == Region::Saturated {
        return Ok(0.0);
    }
    let u_xx = -1.0 / surface.eval_vyy(tau, p.y)?;
    Ok(-surface.market.theta_over_sigma() * p.u_x / u_xx)
}

/// `∂v/∂τ - ½θ² y² v_yy + r y v_y`, with `∂v/∂τ` by central difference.
pub fn hjb_residual_dual(surface: &DualSurface, tau: f64, y: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("residual needs tau > 0, got {tau}")));
    }
    let h = TAU_STEP.min(0.5 * tau);
    let v_tau = (surface.eval_v(tau + h, y)? - surface.eval_v(tau - h, y)?) / (2.0 * h);
    let th = surface.market.theta;
    let vy = surface.eval_vy(tau, y)?;
    let vyy = surface.eval_vyy(tau, y)?;
    Ok(v_tau - 0.5 * th * th * y * y * vyy + surface.market.r * y * vy)
}

/// `-∂u/∂τ - ½θ² u_x² / u_xx + r x u_x` at an interior point.
pub fn hjb_residual_primal(surface: &DualSurface, tau: f64, x: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("residual needs tau > 0, got {tau}")));
    }
    let h = TAU_STEP.min(0.5 * tau);
    let p = value_u(surface, tau, x)?;
    if p.region == Region::Saturated {
        return Err(Error::Region { x, boundary: saturation_boundary(surface, tau) });
    }
    let vyy = surface.eval_vyy(tau, p.y)?;
    if !(vyy > 0.0) || !vyy.is_finite() || vyy < f64::MIN_POSITIVE {
        return Err(Error::Degenerate(format!("v_yy = {vyy:e} at y = {}", p.y)));
    }
    let u_xx = -1.0 / vyy;
    let up = value_u(surface, tau + h, x)?.u;
    let um = value_u(surface, tau - h, x)?.u;
    let u_tau = (up - um) / (2.0 * h);
    let th = surface.market.theta;
    Ok(-u_tau - 0.5 * th * th * p.u_x * p.u_x / u_xx + surface.market.r * x * p.u_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketParams;
    use crate::normal;
    use crate::utility::UtilitySpec;

    fn mkt() -> MarketParams {
        MarketParams::new(0.05, 0.10, 0.2).unwrap()
    }

    fn surface(u: UtilitySpec) -> DualSurface {
        DualSurface::from_utility(mkt(), &u).unwrap()
    }

    #[test]
    fn power_inversion_and_value() {
        let s = surface(UtilitySpec::power(0.5).unwrap());
        assert!((invert_marginal(&s, 1e-8, 4.0).unwrap() - 0.5).abs() < 1e-7);
        let y = invert_marginal(&s, 1.0, 1.0).unwrap();
        assert!((y - 0.05625f64.exp()).abs() < 1e-9);
        let p = value_u(&s, 1.0, 1.0).unwrap();
        let want = 2.0 * 0.05625f64.exp();
        assert!((p.u - want).abs() < 1e-9 * want);
        assert!((p.pi_frac - 2.5).abs() < 1e-8);
        assert_eq!(value_u(&s, 0.0, 3.0).unwrap().u, UtilitySpec::power(0.5).unwrap().eval(3.0).unwrap());
    }

    #[test]
    fn inverse_quartic_short_horizon() {
        let s = surface(UtilitySpec::inverse_quartic().unwrap());
        let y = invert_marginal(&s, 1e-8, 1.0).unwrap();
        let want = ((1.0 + 5f64.sqrt()) / 2.0).sqrt();
        assert!((y - want).abs() < 1e-6);
        let p = value_u(&s, 0.0, 1.0).unwrap();
        // 5x - (θ/σ) 4x / (1 + sqrt(1 + 4x)) at x = 1
        let want = 5.0 - 1.25 * 4.0 / (1.0 + 5f64.sqrt());
        assert!((p.amount - want).abs() < 1e-12, "{}", p.amount);
    }

    #[test]
    fn capped_saturation() {
        let s = surface(UtilitySpec::capped_linear(1.0).unwrap());
        let p = value_u(&s, 1.0, 0.96).unwrap();
        assert_eq!(p.region, Region::Saturated);
        assert_eq!((p.u, p.amount), (1.0, 0.0));
        assert!(matches!(invert_marginal(&s, 1.0, 0.96), Err(Error::Region { .. })));
        let x = 0.5 * (-0.05f64).exp();
        let p = value_u(&s, 1.0, x).unwrap();
        assert!((p.u - normal::cdf(0.25)).abs() < 1e-9);
        let a = (-0.05f64).exp() * normal::pdf(0.0) / 0.2;
        assert!((p.amount - a).abs() < 1e-8 * a);
    }

    #[test]
    fn residuals_are_small() {
        let s = surface(UtilitySpec::power(0.5).unwrap());
        assert!(hjb_residual_dual(&s, 1.0, 1.0).unwrap().abs() < 1e-6);
        assert!(hjb_residual_primal(&s, 1.0, 1.0).unwrap().abs() < 1e-6);
        let s = surface(UtilitySpec::capped_linear(1.0).unwrap());
        assert!(hjb_residual_dual(&s, 1.0, 0.5).unwrap().abs() < 1e-6);
        let p = value_u(&s, 0.5, 0.2).unwrap();
        assert!(hjb_residual_primal(&s, 0.5, 0.2).unwrap().abs() < 1e-5 * (1.0 + p.u));
    }

    #[test]
    fn primal_form_matches() {
        let s = surface(UtilitySpec::inverse_quartic().unwrap());
        let (a, _) = allocation(&s, 2.0, 0.7).unwrap();
        let b = allocation_primal_form(&s, 2.0, 0.7).unwrap();
        assert!((a - b).abs() <= 1e-8 * a.abs());
    }
}
