//! Market parameters and the transform constants derived from them.

use serde::Serialize;

use crate::error::{Error, Result};

/// One risky asset and a money market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Sharpe ratio `(mu - r) / sigma`.
    pub theta: f64,
}

impl MarketParams {
    pub fn new(r: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Parameter(format!("r must be positive, got {r}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
        }
        if !mu.is_finite() {
            return Err(Error::Parameter(format!("mu must be finite, got {mu}")));
        }
        Ok(MarketParams { r, mu, sigma, theta: (mu - r) / sigma })
    }

    /// Same market with the drift adjusted so that the Sharpe ratio is `theta`.
    pub fn with_theta(r: f64, theta: f64, sigma: f64) -> Result<Self> {
        let mut m = Self::new(r, r + theta * sigma, sigma)?;
        m.theta = theta;
        Ok(m)
    }

    /// `θ / σ`, the scale of every allocation.
    pub fn theta_over_sigma(&self) -> f64 {
        self.theta / self.sigma
    }

    /// Rejects markets with no risk premium.
    pub fn require_positive_theta(&self) -> Result<()> {
        if self.theta > 0.0 {
            Ok(())
        } else {
            Err(Error::Degenerate(format!("Sharpe ratio must be positive, got {}", self.theta)))
        }
    }
}

/// `α = ½ + r/θ²`, `a = θ/√2`, `β = -a²α²`, `λ(q) = ½θ²q(q-1) - rq`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub alpha: f64,
    pub a: f64,
    pub beta: f64,
    pub q: f64,
    pub lambda: f64,
}

pub fn derived_constants(market: &MarketParams, q: f64) -> Result<DerivedConstants> {
    if !(q < 1.0) {
        return Err(Error::Precondition(format!("q must be below 1, got {q}")));
    }
    market.require_positive_theta()?;
    let th2 = market.theta * market.theta;
    let alpha = 0.5 + market.r / th2;
    let a = market.theta / std::f64::consts::SQRT_2;
    Ok(DerivedConstants {
        alpha,
        a,
        beta: -a * a * alpha * alpha,
        q,
        lambda: 0.5 * th2 * q * (q - 1.0) - market.r * q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    Unconstrained,
    NonnegativeOrthant,
}

/// Portfolio constraint cone. Only the two cases with a closed-form
/// projection are representable.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    pub kind: ConeKind,
    pub excess_returns: Vec<f64>,
}

impl ConeSpec {
    pub fn unconstrained() -> Self {
        ConeSpec { kind: ConeKind::Unconstrained, excess_returns: Vec::new() }
    }

    pub fn nonnegative(excess_returns: Vec<f64>) -> Self {
        ConeSpec { kind: ConeKind::NonnegativeOrthant, excess_returns }
    }

    /// Parse a config name.
    pub fn from_name(name: &str, excess_returns: Vec<f64>) -> Result<Self> {
        match name {
            "unconstrained" => Ok(Self::unconstrained()),
            "nonneg" | "nonnegative_orthant" => Ok(Self::nonnegative(excess_returns)),
            other => Err(Error::UnsupportedCone(other.to_string())),
        }
    }
}

/// `θ̂` for the supported cones together with the floor `θ₀ = |θ̂|`.
///
/// For both cones the minimiser of `|θ + σ⁻¹π̃|²` over the polar cone is
/// `π̃ = 0`, so `θ̂ = θ`; a no-short-selling constraint needs every excess
/// return positive for that to hold.
pub fn project_theta_hat(theta: &[f64], cone: &ConeSpec) -> Result<(Vec<f64>, f64)> {
    if cone.kind == ConeKind::NonnegativeOrthant {
        if cone.excess_returns.len() != theta.len() {
            return Err(Error::Parameter(format!(
                "{} excess returns for {} assets",
                cone.excess_returns.len(),
                theta.len()
            )));
        }
        if let Some(b) = cone.excess_returns.iter().find(|b| !(**b > 0.0)) {
            return Err(Error::UnsupportedCone(format!(
                "no-short-selling cone with non-positive excess return {b}"
            )));
        }
    }
    let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("|θ̂| = 0: the market offers no risk premium".into()));
    }
    Ok((theta.to_vec(), norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mkt() -> MarketParams {
        MarketParams::new(0.05, 0.10, 0.2).unwrap()
    }

    #[test]
    fn constants_examples() {
        let c = derived_constants(&mkt(), -1.0).unwrap();
        assert!((c.alpha - 1.3).abs() < 1e-14);
        assert!((c.a - 0.176_776_695_296_636_9).abs() < 1e-15);
        assert!((c.beta + 0.052_812_5).abs() < 1e-15);
        assert!((c.lambda - 0.1125).abs() < 1e-15);
        assert!((derived_constants(&mkt(), -3.0).unwrap().lambda - 0.525).abs() < 1e-14);
        assert_eq!(derived_constants(&mkt(), 0.0).unwrap().lambda, 0.0);
        assert!(derived_constants(&mkt(), 1.0).is_err());
    }

    #[test]
    fn market_validation() {
        assert!((mkt().theta - 0.25).abs() < 1e-15);
        let e = MarketParams::new(0.05, 0.1, 0.0).unwrap_err();
        assert!(e.to_string().contains("sigma must be positive"));
        assert!(MarketParams::new(0.0, 0.1, 0.2).is_err());
    }

    #[test]
    fn projection_examples() {
        let (t, n) = project_theta_hat(&[0.25], &ConeSpec::unconstrained()).unwrap();
        assert_eq!((t, n), (vec![0.25], 0.25));
        let (t, _) = project_theta_hat(&[0.25, 0.1], &ConeSpec::nonnegative(vec![0.05, 0.02])).unwrap();
        assert_eq!(t, vec![0.25, 0.1]);
        assert!(matches!(project_theta_hat(&[0.0], &ConeSpec::unconstrained()), Err(Error::Degenerate(_))));
        assert!(matches!(
            project_theta_hat(&[0.25], &ConeSpec::nonnegative(vec![-0.01])),
            Err(Error::UnsupportedCone(_))
        ));
        assert!(matches!(ConeSpec::from_name("box", vec![]), Err(Error::UnsupportedCone(_))));
    }

    proptest! {
        #[test]
        fn signs_and_identity(r in 0.001f64..0.2, theta in 0.05f64..1.0, q in -8.0f64..-0.01) {
            let m = MarketParams::with_theta(r, theta, 0.2).unwrap();
            let c = derived_constants(&m, q).unwrap();
            prop_assert!(c.lambda > 0.0);
            prop_assert!(c.beta < 0.0);
            let lhs = (c.alpha - q).powi(2) * c.a * c.a;
            let rhs = c.lambda - c.beta;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            let l0 = derived_constants(&m, 0.0).unwrap().lambda;
            let direct = 0.5 * theta * theta * q * (q - 1.0) - r * q;
            prop_assert!((c.lambda - l0 - direct).abs() <= 1e-15 * (1.0 + direct.abs()));
        }
    }
}
