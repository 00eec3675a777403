//! The dual value `v(τ, y) = E[V(y Ỹ_τ)]` and its `y`-derivatives.
//!
//! `ln Ỹ_τ` is normal with mean `-rτ - α(τ)` and variance `2α(τ)`, where
//! `α(τ) = ½ ∫ |θ̂|²`; for a constant Sharpe ratio `2α(τ) = θ²τ`. Writing
//! `Ỹ = exp(m + s z)` with `z` standard normal turns every quantity into a
//! one-dimensional Gaussian integral, evaluated by composite Gauss–Legendre
//! with the images of the kinks of `V` as panel breakpoints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{derived_constants, DerivedConstants, MarketParams};
use crate::normal;
use crate::quadrature;
use crate::utility::{
    classify_asymptotics, default_probe_grid, AsymptoticClass, DualUtilitySpec, ExtendedReal, UtilitySpec,
};

/// Samples per RNG stream in the Monte Carlo oracle.
const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub node_count: usize,
    pub eta_halfwidth: f64,
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { node_count: 256, eta_halfwidth: 12.0, rel_tol: 1e-10 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_count < 64 || self.node_count % 2 != 0 {
            return Err(Error::Parameter(format!("node_count must be even and >= 64, got {}", self.node_count)));
        }
        if !(self.eta_halfwidth >= 8.0) {
            return Err(Error::Parameter(format!("eta_halfwidth must be >= 8, got {}", self.eta_halfwidth)));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-2) {
            return Err(Error::Parameter(format!("rel_tol must lie in (0, 1e-2), got {}", self.rel_tol)));
        }
        Ok(())
    }
}

/// Which integral identity is used for the derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Differentiate `V` inside the expectation; needs `V'` in closed form.
    A,
    /// Move the derivatives onto the Gaussian kernel; needs only `V`.
    B,
    /// `A` when `V'` is available, else `B`.
    Auto,
}

/// Piecewise-constant Sharpe ratio over time-to-horizon, starting at `τ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSchedule {
    /// Segment lengths; the last segment extends to infinity.
    pub durations: Vec<f64>,
    /// `|θ̂|` on each segment; one more entry than `durations`.
    pub thetas: Vec<f64>,
}

impl ThetaSchedule {
    pub fn new(durations: Vec<f64>, thetas: Vec<f64>) -> Result<Self> {
        if thetas.len() != durations.len() + 1 {
            return Err(Error::Parameter(format!(
                "{} durations need {} theta values, got {}",
                durations.len(),
                durations.len() + 1,
                thetas.len()
            )));
        }
        if durations.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Parameter("schedule durations must be positive".into()));
        }
        if thetas.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Degenerate("schedule contains a zero Sharpe ratio".into()));
        }
        Ok(ThetaSchedule { durations, thetas })
    }

    /// `α(τ) = Σ ½ θ̂ᵢ² Δᵢ` over the part of the schedule inside `[0, τ]`.
    pub fn alpha(&self, tau: f64) -> f64 {
        let mut acc = 0.0;
        let mut start = 0.0;
        for (i, th) in self.thetas.iter().enumerate() {
            let end = self.durations.get(i).map_or(f64::INFINITY, |d| start + d);
            let seg = (tau.min(end) - start).max(0.0);
            acc += 0.5 * th * th * seg;
            if tau <= end {
                break;
            }
            start = end;
        }
        acc
    }
}

/// Evaluator for `v`, `v_y`, `v_yy` of one dual utility in one market.
#[derive(Debug, Clone)]
pub struct DualSurface {
    pub market: MarketParams,
    pub dual: DualUtilitySpec,
    pub class: AsymptoticClass,
    pub constants: DerivedConstants,
    pub quad: QuadratureConfig,
    pub theta_schedule: Option<ThetaSchedule>,
    /// The primal utility, when the surface was built from one.
    pub utility: Option<UtilitySpec>,
    route: Route,
}

impl DualSurface {
    pub fn new(market: MarketParams, dual: DualUtilitySpec, quad: QuadratureConfig) -> Result<Self> {
        quad.validate()?;
        market.require_positive_theta()?;
        let class = classify_asymptotics(&dual, &default_probe_grid());
        let q = class.q.filter(|q| *q < 1.0).unwrap_or(dual.growth_q());
        let constants = derived_constants(&market, q)?;
        Ok(DualSurface {
            market,
            dual,
            class,
            constants,
            quad,
            theta_schedule: None,
            utility: None,
            route: Route::Auto,
        })
    }

    /// Surface for the conjugate of `utility`, with default quadrature settings.
    pub fn from_utility(market: MarketParams, utility: &UtilitySpec) -> Result<Self> {
        Self::from_utility_with(market, utility, QuadratureConfig::default())
    }

    pub fn from_utility_with(market: MarketParams, utility: &UtilitySpec, quad: QuadratureConfig) -> Result<Self> {
        let mut s = Self::new(market, utility.dual()?, quad)?;
        s.utility = Some(utility.clone());
        Ok(s)
    }

    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }

    pub fn with_schedule(mut self, schedule: ThetaSchedule) -> Self {
        self.theta_schedule = Some(schedule);
        self
    }

    fn resolved_route(&self, route: Route) -> Route {
        match route {
            Route::Auto if self.dual.has_closed_derivative() => Route::A,
            Route::Auto => Route::B,
            r => r,
        }
    }

    /// `(m, s)` with `ln Ỹ_τ = m + s z`.
    pub fn lognormal_params(&self, tau: f64) -> (f64, f64) {
        let var = match &self.theta_schedule {
            Some(s) => 2.0 * s.alpha(tau),
            None => self.market.theta * self.market.theta * tau,
        };
        (-self.market.r * tau - 0.5 * var, var.sqrt())
    }

    fn check(tau: f64, y: f64) -> Result<()> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::Domain(format!("tau must be non-negative, got {tau}")));
        }
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::Domain(format!("y must be positive, got {y}")));
        }
        Ok(())
    }

    fn v_at(&self, y: f64) -> f64 {
        self.dual.eval(y).unwrap_or(f64::NAN)
    }

    /// Integrate `φ(z) g(z)` over the effective domain for `(τ, y)`.
    fn gauss<G: Fn(f64) -> f64>(&self, tau: f64, y: f64, extra_power: f64, g: G) -> Result<f64> {
        let (m, s) = self.lognormal_params(tau);
        let h = self.quad.eta_halfwidth;
        // V(yỸ) grows like Ỹ^q, which moves the mass of φ·V to z ≈ q s
        let q = self.constants.q.min(self.dual.growth_q()) + extra_power;
        let mut lo = -h + (q * s).min(0.0) - 1.0;
        let mut hi = h;
        let z_of = |yk: f64| ((yk / y).ln() - m) / s;
        if let Some(end) = self.dual.support_end() {
            let z_sup = z_of(end);
            // Keep a window below z_sup wide enough that φ drops by e^{-h²/2}
            // relative to φ(z_sup); when only a far tail survives this is
            // what keeps the result accurate relative to its own size.
            let w = -z_sup.abs() + (z_sup * z_sup + h * h).sqrt();
            lo = lo.min(z_sup - w.max(1.0));
            hi = hi.min(z_sup);
        }
        if hi <= lo {
            return Ok(0.0);
        }
        let breaks: Vec<f64> = self.dual.kinks().into_iter().map(z_of).collect();
        let f = |z: f64| normal::pdf(z) * g(z);
        quadrature::integrate(f, lo, hi, &breaks, self.quad.node_count, self.quad.rel_tol)
    }

    /// `v(τ, y)`; equals `V(y)` at `τ = 0`.
    pub fn eval_v(&self, tau: f64, y: f64) -> Result<f64> {
        Self::check(tau, y)?;
        if tau == 0.0 {
            return self.dual.eval(y);
        }
        let (m, s) = self.lognormal_params(tau);
        self.gauss(tau, y, 0.0, |z| self.v_at(y * (m + s * z).exp()))
    }

    pub fn eval_vy(&self, tau: f64, y: f64) -> Result<f64> {
        self.eval_vy_route(tau, y, self.route)
    }

    pub fn eval_vy_route(&self, tau: f64, y: f64, route: Route) -> Result<f64> {
        Self::check(tau, y)?;
        if tau == 0.0 {
            return self.dual.derivative(y).ok_or_else(|| {
                Error::Precondition("v_y at tau = 0 needs a differentiable dual".into())
            });
        }
        let (m, s) = self.lognormal_params(tau);
        match self.resolved_route(route) {
            Route::A => {
                let d = |u: f64| self.dual.derivative(u).unwrap_or(f64::NAN);
                self.gauss(tau, y, -1.0, |z| {
                    let yt = (m + s * z).exp();
                    d(y * yt) * yt
                })
            }
            _ => {
                let i = self.gauss(tau, y, 0.0, |z| z * self.v_at(y * (m + s * z).exp()))?;
                Ok(i / (s * y))
            }
        }
    }

    pub fn eval_vyy(&self, tau: f64, y: f64) -> Result<f64> {
        self.eval_vyy_route(tau, y, self.route)
    }

    /// `v_yy` from `y² v_yy + y v_y = (d/d ln y)² v`.
    pub fn eval_vyy_route(&self, tau: f64, y: f64, route: Route) -> Result<f64> {
        Self::check(tau, y)?;
        if tau == 0.0 {
            return self.dual.second_derivative(y).ok_or_else(|| {
                Error::Precondition("v_yy at tau = 0 needs a twice differentiable dual".into())
            });
        }
        let (m, s) = self.lognormal_params(tau);
        let route = self.resolved_route(route);
        let second_log = match route {
            Route::A => {
                let d = |u: f64| self.dual.derivative(u).unwrap_or(f64::NAN);
                self.gauss(tau, y, -1.0, |z| {
                    let u = y * (m + s * z).exp();
                    z * u * d(u)
                })? / s
            }
            _ => self.gauss(tau, y, 0.0, |z| (z * z - 1.0) * self.v_at(y * (m + s * z).exp()))? / (s * s),
        };
        let vy = self.eval_vy_route(tau, y, route)?;
        Ok((second_log - y * vy) / (y * y))
    }

    /// Relative gap between `v_yy` and a central difference of `v_y`.
    pub fn vyy_fd_mismatch(&self, tau: f64, y: f64) -> Result<f64> {
        let h = (1e-5 * y).max(1e-9);
        let fd = (self.eval_vy(tau, y + h)? - self.eval_vy(tau, y - h)?) / (2.0 * h);
        let an = self.eval_vyy(tau, y)?;
        Ok((fd - an).abs() / an.abs().max(f64::MIN_POSITIVE))
    }

    /// `(v(τ, 0), v_y(τ, 0)) = (V(0), e^{-rτ} V'(0))`.
    pub fn boundary_limits(&self, tau: f64) -> (ExtendedReal, ExtendedReal) {
        (self.dual.v0(), self.dual.vprime0().scale((-self.market.r * tau).exp()))
    }

    /// Plain Monte Carlo estimate of `E[V(y Ỹ_τ)]` with its standard error.
    ///
    /// Samples are drawn in fixed chunks, each from its own ChaCha stream
    /// keyed by `(seed, chunk)`, and reduced in chunk order, so the result
    /// does not depend on the thread count.
    pub fn mc_value_oracle(&self, tau: f64, y: f64, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
        Self::check(tau, y)?;
        if !(tau > 0.0) {
            return Err(Error::Precondition("Monte Carlo oracle needs tau > 0".into()));
        }
        if n_samples < 10_000 {
            return Err(Error::Precondition(format!("need at least 1e4 samples, got {n_samples}")));
        }
        let (m, s) = self.lognormal_params(tau);
        let chunks = n_samples.div_ceil(MC_CHUNK);
        let parts: Vec<(f64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let n = MC_CHUNK.min(n_samples - c * MC_CHUNK);
                let (mut s1, mut s2) = (0.0, 0.0);
                for _ in 0..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let v = self.v_at(y * (m + s * z).exp());
                    s1 += v;
                    s2 += v * v;
                }
                (s1, s2)
            })
            .collect();
        let (s1, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let n = n_samples as f64;
        let mean = s1 / n;
        let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
        if !mean.is_finite() {
            return Err(Error::Convergence("Monte Carlo sample mean is not finite".into()));
        }
        Ok((mean, (var / n).sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::ScalarFn;
    use std::sync::Arc;

    fn mkt() -> MarketParams {
        MarketParams::new(0.05, 0.10, 0.2).unwrap()
    }

    fn surface(u: UtilitySpec) -> DualSurface {
        DualSurface::from_utility(mkt(), &u).unwrap()
    }

    #[test]
    fn power_values() {
        let s = surface(UtilitySpec::power(0.5).unwrap());
        let e = 0.1125f64.exp();
        assert!((s.eval_v(1.0, 1.0).unwrap() - e).abs() < 1e-10 * e);
        assert!((s.eval_vy(1.0, 1.0).unwrap() + e).abs() < 1e-10 * e);
        assert!((s.eval_vyy(1.0, 1.0).unwrap() - 2.0 * e).abs() < 1e-9 * e);
        assert_eq!(s.eval_v(0.0, 2.0).unwrap(), 0.5);
    }

    #[test]
    fn capped_values() {
        let s = surface(UtilitySpec::capped_linear(1.0).unwrap());
        let want = -(-0.05f64).exp() * normal::cdf(0.075) + normal::cdf(0.325);
        assert!((s.eval_v(1.0, 1.0).unwrap() - want).abs() < 1e-10);
        assert!((want - 0.12335).abs() < 1e-5);
        let vy = -(-0.05f64).exp() * normal::cdf(0.075);
        assert!((s.eval_vy(1.0, 1.0).unwrap() - vy).abs() < 1e-10);
        assert!((s.eval_vy_route(1.0, 1.0, Route::B).unwrap() - vy).abs() < 1e-9);
    }

    #[test]
    fn routes_agree_for_inverse_quartic() {
        let s = surface(UtilitySpec::inverse_quartic().unwrap());
        let a = s.eval_vy_route(1.0, 0.7, Route::A).unwrap();
        let b = s.eval_vy_route(1.0, 0.7, Route::B).unwrap();
        assert!((a - b).abs() <= 1e-8 * a.abs(), "{a} vs {b}");
        let a = s.eval_vyy_route(1.0, 0.7, Route::A).unwrap();
        let b = s.eval_vyy_route(1.0, 0.7, Route::B).unwrap();
        assert!((a - b).abs() <= 1e-8 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn short_horizon_curvature() {
        let s = surface(UtilitySpec::inverse_quartic().unwrap());
        let vyy = s.eval_vyy(1e-4, 1.0).unwrap();
        assert!((vyy - 6.0).abs() < 1e-2, "{vyy}");
    }

    #[test]
    fn fd_cross_check() {
        let s = surface(UtilitySpec::piecewise_power(1.0, 0.5).unwrap());
        assert!(s.vyy_fd_mismatch(1.0, 0.5).unwrap() < 1e-4);
    }

    #[test]
    fn boundary_examples() {
        let s = surface(UtilitySpec::capped_linear(1.0).unwrap());
        let (v0, vy0) = s.boundary_limits(1.0);
        assert_eq!(v0, ExtendedReal::Finite(1.0));
        assert!((vy0.finite().unwrap() + 0.951_229_424_500_714).abs() < 1e-14);
        let s = surface(UtilitySpec::power(0.5).unwrap());
        assert_eq!(s.boundary_limits(1.0), (ExtendedReal::PosInfinity, ExtendedReal::NegInfinity));
    }

    #[test]
    fn linear_dual_through_both_paths() {
        let f: ScalarFn = Arc::new(|y: f64| y);
        let d: ScalarFn = Arc::new(|_| 1.0);
        let dual = DualUtilitySpec::custom_unchecked("linear", f, Some(d), ExtendedReal::Finite(0.0), ExtendedReal::Finite(1.0));
        let s = DualSurface::new(mkt(), dual, QuadratureConfig::default()).unwrap();
        let want = 2.0 * (-0.05f64 * 3.0).exp();
        assert!((s.eval_v(3.0, 2.0).unwrap() - want).abs() < 1e-12);
        let (mean, se) = s.mc_value_oracle(3.0, 2.0, 100_000, 7).unwrap();
        assert!((mean - want).abs() < 4.0 * se);
    }

    #[test]
    fn mc_is_deterministic() {
        let s = surface(UtilitySpec::capped_linear(1.0).unwrap());
        let a = s.mc_value_oracle(1.0, 1.0, 20_000, 42).unwrap();
        let b = s.mc_value_oracle(1.0, 1.0, 20_000, 42).unwrap();
        assert_eq!(a, b);
        assert!(s.mc_value_oracle(1.0, 1.0, 100, 42).is_err());
    }

    #[test]
    fn schedule_accumulates_exactly() {
        let sch = ThetaSchedule::new(vec![1.0], vec![0.25, 0.5]).unwrap();
        assert!((sch.alpha(0.5) - 0.5 * 0.0625 * 0.5).abs() < 1e-16);
        assert!((sch.alpha(3.0) - (0.5 * 0.0625 + 0.5 * 0.25 * 2.0)).abs() < 1e-15);
        // a constant schedule reproduces the constant-θ surface
        let s = surface(UtilitySpec::power(0.5).unwrap());
        let flat = s.clone().with_schedule(ThetaSchedule::new(vec![], vec![0.25]).unwrap());
        let (a, b) = (s.eval_v(2.0, 0.8).unwrap(), flat.eval_v(2.0, 0.8).unwrap());
        assert!((a - b).abs() < 1e-13 * a);
    }

    #[test]
    fn config_validation() {
        assert!(QuadratureConfig { node_count: 32, ..Default::default() }.validate().is_err());
        assert!(QuadratureConfig { node_count: 65, ..Default::default() }.validate().is_err());
        assert!(QuadratureConfig { eta_halfwidth: 4.0, ..Default::default() }.validate().is_err());
    }
}
