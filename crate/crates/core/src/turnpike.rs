//! Distance of the optimal allocation from the Merton allocation, the
//! explicit exponential bound on it, and empirical decay-rate fits.

use rayon::prelude::*;
use serde::Serialize;

use crate::dual_solver::DualSurface;
use crate::error::{Error, Result};
use crate::format::num;
use crate::market::{derived_constants, MarketParams};
use crate::optimize::linear_fit;
use crate::primal_solver::{value_u, Region};
use crate::utility::{AsymptoticClass, AsymptoticKind};

/// Errors at or below this are treated as exact zeros by the rate fit.
pub const ERROR_FLOOR: f64 = 1e-14;

/// `θ x / (σ (1 - p))`.
pub fn merton_allocation(market: &MarketParams, p: f64, x: f64) -> Result<f64> {
    if !(p < 1.0) {
        return Err(Error::Parameter(format!("Merton exponent must be below 1, got {p}")));
    }
    if !(x > 0.0) {
        return Err(Error::Domain(format!("wealth must be positive, got {x}")));
    }
    Ok(market.theta * x / (market.sigma * (1.0 - p)))
}

/// `|A(τ, x) - θx/(σ(1-p))|`, computed as `(θ/σ) |y v_yy + (1-q) v_y|`.
pub fn turnpike_error(surface: &DualSurface, tau: f64, x: f64, p: f64) -> Result<f64> {
    let target = merton_allocation(&surface.market, p, x)?;
    let point = value_u(surface, tau, x)?;
    if point.region == Region::Saturated {
        return Ok(target);
    }
    if tau == 0.0 {
        return Ok((point.amount - target).abs());
    }
    let q = p / (p - 1.0);
    let y = point.y;
    let vy = surface.eval_vy(tau, y)?;
    let vyy = surface.eval_vyy(tau, y)?;
    Ok(surface.market.theta_over_sigma() * (y * vyy + (1.0 - q) * vy).abs())
}

/// Constants of the explicit turnpike bound `D(x) e^{-c t}`, `t > t̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub q: f64,
    pub alpha1: f64,
    pub k: f64,
    pub t_bar: f64,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub l: f64,
    pub lambda: f64,
    pub beta: f64,
    pub alpha: f64,
    pub a: f64,
    pub rate: f64,
    pub r: f64,
    pub theta_over_sigma: f64,
}

impl BoundConstants {
    pub fn l0_at(&self, t: f64) -> f64 {
        let a2 = self.a * self.a;
        (self.alpha * self.alpha * a2 * t).exp() + ((self.alpha - self.q).powi(2) * a2 * t).exp()
    }

    pub fn l1_at(&self, t: f64) -> f64 {
        let a2 = self.a * self.a;
        ((self.alpha - self.q - self.alpha1).powi(2) * a2 * t).exp()
            + (4.0 + self.alpha * self.alpha * a2 * t).exp()
            + 2.0 * (4.0 - 2.0 * (self.alpha - self.q) * self.a * t.sqrt()).exp()
    }

    pub fn l2_at(&self, t: f64) -> f64 {
        (self.alpha1 + self.q.abs() + 2.0 / (self.a * t.sqrt())) * self.l1_at(t)
    }

    /// `C(x) = 2(L+x) + e^{λt̄} + (2L)^{(1-q)/α₁} e^{λ(1+(1-q)/α₁)t̄}`.
    pub fn c_of_x(&self, x: f64) -> f64 {
        let e = (1.0 - self.q) / self.alpha1;
        2.0 * (self.l + x)
            + (self.lambda * self.t_bar).exp()
            + (2.0 * self.l).powf(e) * (self.lambda * (1.0 + e) * self.t_bar).exp()
    }

    /// `D(x) = (θ/σ)(2L (C e^{-λt̄} + 1)^{(α₁+q-1)/(q-1)} e^{rα₁t̄/(1-q)} + L e^{rt̄})`.
    pub fn d_of_x(&self, x: f64) -> f64 {
        let c = self.c_of_x(x);
        let base = c * (-self.lambda * self.t_bar).exp() + 1.0;
        let e = (self.alpha1 + self.q - 1.0) / (self.q - 1.0);
        self.theta_over_sigma
            * (2.0 * self.l * base.powf(e) * (self.r * self.alpha1 * self.t_bar / (1.0 - self.q)).exp()
                + self.l * (self.r * self.t_bar).exp())
    }
}

/// Evaluate every constant of the bound for a power-class dual.
pub fn bound_constants(market: &MarketParams, class: &AsymptoticClass) -> Result<BoundConstants> {
    if class.kind != AsymptoticKind::PowerQ {
        return Err(Error::Precondition(format!("bound needs a power-class dual, got {:?}", class.kind)));
    }
    let (q, alpha1, k) = match (class.q, class.rate_alpha1, class.rate_k) {
        (Some(q), Some(a1), Some(k)) => (q, a1, k),
        _ => return Err(Error::Precondition("rate constants are missing".into())),
    };
    if !(alpha1 > 0.0 && alpha1 <= 1.0 - q) {
        return Err(Error::Precondition(format!("need 0 < alpha1 <= 1 - q, got alpha1 = {alpha1}, q = {q}")));
    }
    let dc = derived_constants(market, q)?;
    let t_bar = 1.0 / (dc.a * dc.a * alpha1 * alpha1);
    let mut b = BoundConstants {
        q,
        alpha1,
        k,
        t_bar,
        l0: 0.0,
        l1: 0.0,
        l2: 0.0,
        l: 0.0,
        lambda: dc.lambda,
        beta: dc.beta,
        alpha: dc.alpha,
        a: dc.a,
        rate: market.r * alpha1 / (1.0 - q),
        r: market.r,
        theta_over_sigma: market.theta_over_sigma(),
    };
    b.l0 = b.l0_at(t_bar);
    b.l1 = b.l1_at(t_bar);
    b.l2 = b.l2_at(t_bar);
    let el = (dc.lambda * t_bar).exp();
    let eb = (dc.beta * t_bar).exp();
    let last = (2.0 + 2.0 * q.abs() + 1.0 / (dc.a * (std::f64::consts::PI * t_bar).sqrt())) * eb * b.l0;
    b.l = k * [2.0 * el * b.l1, 2.0 * el * b.l2, eb * b.l0 + el, last].into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok(b)
}

/// `D(x) e^{-rate·t}` for `t > t̄`.
pub fn error_bound(constants: &BoundConstants, x: f64, t: f64) -> Result<f64> {
    if !(t > constants.t_bar) {
        return Err(Error::Precondition(format!("bound holds for t > {}, got {t}", constants.t_bar)));
    }
    Ok(constants.d_of_x(x) * (-constants.rate * t).exp())
}

/// Outcome of a log-linear decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayFit {
    Fitted { c_hat: f64, intercept: f64, r_squared: f64 },
    /// Every error in the window vanished.
    Exact,
}

/// OLS of `ln(error)` on `t` inside `window`; `c_hat` is minus the slope.
pub fn fit_decay_rate(points: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let inside: Vec<(f64, f64)> =
        points.iter().cloned().filter(|&(t, _)| t >= window.0 && t <= window.1).collect();
    let live: Vec<(f64, f64)> = inside.iter().cloned().filter(|&(_, e)| e > ERROR_FLOOR).collect();
    if !inside.is_empty() && live.is_empty() {
        return Ok(DecayFit::Exact);
    }
    if live.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} usable points in [{}, {}], need 5",
            live.len(),
            window.0,
            window.1
        )));
    }
    let ts: Vec<f64> = live.iter().map(|p| p.0).collect();
    let ls: Vec<f64> = live.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&ts, &ls)?;
    Ok(DecayFit::Fitted { c_hat: -slope, intercept, r_squared })
}

/// Measured errors along a `τ` grid, with the bound where it applies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnpikeReport {
    pub x: f64,
    pub p: f64,
    pub tau_grid: Vec<f64>,
    pub merton_target: f64,
    pub amounts: Vec<f64>,
    pub errors: Vec<f64>,
    /// `D(x) e^{-rate τ}` for `τ > t̄`, NaN elsewhere.
    pub bound_curve: Option<Vec<f64>>,
    pub constants: Option<BoundConstants>,
    pub fit_window: (f64, f64),
    pub fitted: Option<DecayFit>,
    /// Bound ≥ error at every `τ > t̄`; absent without rate constants.
    pub dominance_ok: Option<bool>,
}

impl TurnpikeReport {
    /// Evaluate errors at each `τ` (in parallel, in grid order) and attach
    /// the bound and a decay fit. The default fit window is `(t̄, 4t̄]`,
    /// or the whole grid when no bound is available.
    pub fn build(surface: &DualSurface, x: f64, p: f64, tau_grid: &[f64], window: Option<(f64, f64)>) -> Result<Self> {
        let target = merton_allocation(&surface.market, p, x)?;
        let rows: Vec<Result<(f64, f64)>> = tau_grid
            .par_iter()
            .map(|&tau| {
                let pt = value_u(surface, tau, x)?;
                Ok((pt.amount, turnpike_error(surface, tau, x, p)?))
            })
            .collect();
        let mut amounts = Vec::with_capacity(rows.len());
        let mut errors = Vec::with_capacity(rows.len());
        for r in rows {
            let (a, e) = r?;
            amounts.push(a);
            errors.push(e);
        }
        let constants = if surface.class.has_rate_constants() {
            bound_constants(&surface.market, &surface.class).ok()
        } else {
            None
        };
        let bound_curve = constants.map(|c| {
            tau_grid.iter().map(|&t| error_bound(&c, x, t).unwrap_or(f64::NAN)).collect::<Vec<f64>>()
        });
        let dominance_ok = bound_curve.as_ref().map(|b| {
            tau_grid.iter().zip(b).zip(&errors).all(|((t, b), e)| match constants {
                Some(c) if *t > c.t_bar => b >= e,
                _ => true,
            })
        });
        let fit_window = window.unwrap_or_else(|| match constants {
            Some(c) => (c.t_bar * (1.0 + 1e-12), 4.0 * c.t_bar),
            None => (
                tau_grid.iter().cloned().fold(f64::INFINITY, f64::min),
                tau_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
        });
        let pts: Vec<(f64, f64)> = tau_grid.iter().cloned().zip(errors.iter().cloned()).collect();
        let fitted = fit_decay_rate(&pts, fit_window).ok();
        Ok(TurnpikeReport {
            x,
            p,
            tau_grid: tau_grid.to_vec(),
            merton_target: target,
            amounts,
            errors,
            bound_curve,
            constants,
            fit_window,
            fitted,
            dominance_ok,
        })
    }

    /// CSV with columns `t,error,bound,target,A` and a `#`-prefixed JSON footer.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,error,bound,target,A\n");
        for (i, t) in self.tau_grid.iter().enumerate() {
            let b = self.bound_curve.as_ref().map_or(f64::NAN, |b| b[i]);
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                num(*t),
                num(self.errors[i]),
                num(b),
                num(self.merton_target),
                num(self.amounts[i])
            ));
        }
        let dom = match self.dominance_ok {
            Some(d) => d.to_string(),
            None => "null".into(),
        };
        let (rate, r2) = match self.fitted {
            Some(DecayFit::Fitted { c_hat, r_squared, .. }) => (num(c_hat), num(r_squared)),
            Some(DecayFit::Exact) => ("\"exact\"".into(), "null".into()),
            None => ("null".into(), "null".into()),
        };
        let tbar = self.constants.map_or("null".into(), |c| num(c.t_bar));
        s.push_str(&format!(
            "# {{\"dominance_ok\":{dom},\"fitted_rate\":{rate},\"r_squared\":{r2},\"fit_window\":[{},{}],\"t_bar\":{tbar}}}\n",
            num(self.fit_window.0),
            num(self.fit_window.1)
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::UtilitySpec;

    fn mkt() -> MarketParams {
        MarketParams::new(0.05, 0.10, 0.2).unwrap()
    }

    #[test]
    fn merton_examples() {
        assert!((merton_allocation(&mkt(), 0.75, 1.0).unwrap() - 5.0).abs() < 1e-14);
        assert!((merton_allocation(&mkt(), 0.5, 2.0).unwrap() - 5.0).abs() < 1e-14);
        assert!((merton_allocation(&mkt(), 0.0, 1.0).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn inverse_quartic_constants() {
        let s = DualSurface::from_utility(mkt(), &UtilitySpec::inverse_quartic().unwrap()).unwrap();
        let b = bound_constants(&s.market, &s.class).unwrap();
        assert!((b.t_bar - 8.0).abs() < 1e-12);
        assert!((b.rate - 0.025).abs() < 1e-15);
        let l0 = 0.4225f64.exp() + 4.6225f64.exp();
        assert!((b.l0 - l0).abs() < 1e-10 * l0);
        assert!((l0 - 103.27).abs() < 0.01);
        assert!(error_bound(&b, 1.0, 8.0).is_err());
        assert!(error_bound(&b, 1.0, 8.0 + 1e-9).unwrap() > 0.0);
    }

    #[test]
    fn t_bar_for_unit_alpha() {
        let class = AsymptoticClass {
            kind: AsymptoticKind::PowerQ,
            q: Some(-1.0),
            scale_k: Some(1.0),
            rate_alpha1: Some(1.0),
            rate_k: Some(1.0),
            threshold_delta: Some(1.0),
            merton_p: Some(0.5),
            exact: false,
        };
        assert!((bound_constants(&mkt(), &class).unwrap().t_bar - 32.0).abs() < 1e-12);
        let bad = AsymptoticClass { rate_alpha1: Some(2.5), ..class };
        assert!(matches!(bound_constants(&mkt(), &bad), Err(Error::Precondition(_))));
    }

    #[test]
    fn fit_examples() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, (-0.3 * i as f64).exp())).collect();
        match fit_decay_rate(&pts, (0.0, 9.0)).unwrap() {
            DecayFit::Fitted { c_hat, r_squared, .. } => {
                assert!((c_hat - 0.3).abs() < 1e-12);
                assert!((r_squared - 1.0).abs() < 1e-12);
            }
            DecayFit::Exact => panic!("expected a fit"),
        }
        let zeros: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.0)).collect();
        assert_eq!(fit_decay_rate(&zeros, (0.0, 9.0)).unwrap(), DecayFit::Exact);
        assert!(matches!(fit_decay_rate(&pts[..3], (0.0, 9.0)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn power_error_vanishes() {
        let s = DualSurface::from_utility(mkt(), &UtilitySpec::power(0.5).unwrap()).unwrap();
        for (t, x) in [(0.5, 0.3), (4.0, 2.0)] {
            assert!(turnpike_error(&s, t, x, 0.5).unwrap() <= 1e-8 * 2.5 * x);
        }
    }
}
