use std::fmt;

use super::{ExtendedReal, ScalarFn, UtilityKind, UtilitySpec};
use crate::error::{Error, Result};
use crate::optimize::log_grid;

/// `V` for the two-branch utility `x ∧ H` / `H (x/H)^p`.
pub(crate) fn piecewise_dual(h: f64, p: f64, y: f64) -> f64 {
    if y >= 1.0 {
        0.0
    } else if y >= p {
        h * (1.0 - y)
    } else {
        h * (1.0 - p) * (y / p).powf(p / (p - 1.0))
    }
}

/// Conjugate families. Closed forms where available, otherwise a numeric
/// supremum over the stored primal utility.
#[derive(Clone)]
pub enum DualKind {
    /// `-y^q / q`.
    Power { q: f64 },
    /// `H (1 - y)^+`.
    Capped { h: f64 },
    PiecewisePower { h: f64, p: f64 },
    /// `y^{-3}/3 + y^{-1}`.
    InverseQuartic,
    /// `1 + y (ln y - 1)` on `(0, 1]`, zero beyond.
    ShiftedExponential,
    Numeric(Box<UtilitySpec>),
    /// Arbitrary evaluator, used for quadrature checks; not validated.
    Custom { name: String, eval: ScalarFn, deriv: Option<ScalarFn> },
}

impl fmt::Debug for DualKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DualKind::Power { q } => write!(f, "Power {{ q: {q} }}"),
            DualKind::Capped { h } => write!(f, "Capped {{ h: {h} }}"),
            DualKind::PiecewisePower { h, p } => write!(f, "PiecewisePower {{ h: {h}, p: {p} }}"),
            DualKind::InverseQuartic => write!(f, "InverseQuartic"),
            DualKind::ShiftedExponential => write!(f, "ShiftedExponential"),
            DualKind::Numeric(u) => write!(f, "Numeric({:?})", u.kind()),
            DualKind::Custom { name, .. } => write!(f, "Custom {{ name: {name:?} }}"),
        }
    }
}

/// The dual utility `V` with growth certificate `V(y) <= C (1 + y^q)` and
/// its boundary behaviour at `y = 0`.
#[derive(Debug, Clone)]
pub struct DualUtilitySpec {
    kind: DualKind,
    growth_c: f64,
    growth_q: f64,
    v0: ExtendedReal,
    vprime0: ExtendedReal,
}

impl DualUtilitySpec {
    pub fn from_utility(u: &UtilitySpec) -> Result<Self> {
        use ExtendedReal::*;
        let (kind, v0, vprime0) = match u.kind() {
            UtilityKind::Power { p } => (DualKind::Power { q: p / (p - 1.0) }, PosInfinity, NegInfinity),
            UtilityKind::CappedLinear { h } => (DualKind::Capped { h: *h }, Finite(*h), Finite(-h)),
            UtilityKind::PiecewisePower { h, p } => {
                (DualKind::PiecewisePower { h: *h, p: *p }, PosInfinity, NegInfinity)
            }
            UtilityKind::InverseQuartic => (DualKind::InverseQuartic, PosInfinity, NegInfinity),
            UtilityKind::ShiftedExponential => (DualKind::ShiftedExponential, Finite(1.0), NegInfinity),
            UtilityKind::LogPower { .. } | UtilityKind::Custom { .. } => {
                let (v0, vp0) = numeric_boundary(u)?;
                (DualKind::Numeric(Box::new(u.clone())), v0, vp0)
            }
        };
        let pbar = u.growth_pbar();
        let mut spec = DualUtilitySpec { kind, growth_c: 1.0, growth_q: pbar / (pbar - 1.0), v0, vprime0 };
        spec.growth_c = spec.fit_growth_constant()?;
        Ok(spec)
    }

    /// A dual given directly by its evaluator. No convexity or growth checks
    /// are made; meant for exercising the quadrature paths.
    pub fn custom_unchecked(
        name: impl Into<String>,
        eval: ScalarFn,
        deriv: Option<ScalarFn>,
        v0: ExtendedReal,
        vprime0: ExtendedReal,
    ) -> Self {
        DualUtilitySpec {
            kind: DualKind::Custom { name: name.into(), eval, deriv },
            growth_c: 1.0,
            growth_q: -1.0,
            v0,
            vprime0,
        }
    }

    pub fn kind(&self) -> &DualKind {
        &self.kind
    }

    pub fn growth_c(&self) -> f64 {
        self.growth_c
    }

    pub fn growth_q(&self) -> f64 {
        self.growth_q
    }

    /// `V(0)`, possibly `+∞`.
    pub fn v0(&self) -> ExtendedReal {
        self.v0
    }

    /// Right derivative `V'(0)`, possibly `-∞`.
    pub fn vprime0(&self) -> ExtendedReal {
        self.vprime0
    }

    /// `V(y)`; at `y = 0` the stored limit is returned.
    pub fn eval(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("dual utility evaluated at y = {y}")));
        }
        if y == 0.0 {
            return Ok(self.v0.to_f64());
        }
        Ok(match &self.kind {
            DualKind::Power { q } => -y.powf(*q) / q,
            DualKind::Capped { h } => h * (1.0 - y).max(0.0),
            DualKind::PiecewisePower { h, p } => piecewise_dual(*h, *p, y),
            DualKind::InverseQuartic => y.powi(-3) / 3.0 + 1.0 / y,
            DualKind::ShiftedExponential => {
                if y < 1.0 {
                    1.0 + y * (y.ln() - 1.0)
                } else {
                    0.0
                }
            }
            DualKind::Numeric(u) => {
                if let Some(end) = self.support_end() {
                    if y >= end {
                        return Ok(0.0);
                    }
                }
                u.conjugate_numeric(y)?.0
            }
            DualKind::Custom { eval, .. } => eval(y),
        })
    }

    /// Closed-form right derivative `V'(y)` when the family provides one.
    pub fn derivative(&self, y: f64) -> Option<f64> {
        match &self.kind {
            DualKind::Power { q } => Some(-y.powf(q - 1.0)),
            DualKind::Capped { h } => Some(if y < 1.0 { -h } else { 0.0 }),
            DualKind::PiecewisePower { h, p } => Some(if y >= 1.0 {
                0.0
            } else if y >= *p {
                -h
            } else {
                -h * (y / p).powf(1.0 / (p - 1.0))
            }),
            DualKind::InverseQuartic => Some(-y.powi(-4) - y.powi(-2)),
            DualKind::ShiftedExponential => Some(if y < 1.0 { y.ln() } else { 0.0 }),
            DualKind::Numeric(_) => None,
            DualKind::Custom { deriv, .. } => deriv.as_ref().map(|d| d(y)),
        }
    }

    /// `V''(y)` away from kinks, for the smooth closed forms.
    pub fn second_derivative(&self, y: f64) -> Option<f64> {
        match &self.kind {
            DualKind::Power { q } => Some((1.0 - q) * y.powf(q - 2.0)),
            DualKind::InverseQuartic => Some(4.0 * y.powi(-5) + 2.0 * y.powi(-3)),
            DualKind::ShiftedExponential if y < 1.0 => Some(1.0 / y),
            _ => None,
        }
    }

    pub fn has_closed_derivative(&self) -> bool {
        match &self.kind {
            DualKind::Numeric(_) => false,
            DualKind::Custom { deriv, .. } => deriv.is_some(),
            _ => true,
        }
    }

    /// Points where `V` or `V'` is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            DualKind::Capped { .. } | DualKind::ShiftedExponential => vec![1.0],
            DualKind::PiecewisePower { p, .. } => vec![*p, 1.0],
            DualKind::Numeric(u) => match u.kind() {
                UtilityKind::LogPower { p } => {
                    // V is flat-zero beyond U'(0+) and the linear branch of U
                    // maps to a single dual point
                    vec![1.0 / ((1.0 - p) * std::f64::consts::E)]
                }
                _ => Vec::new(),
            },
            _ => Vec::new(),
        }
    }

    /// Smallest `y` from which `V` vanishes identically, if any.
    pub fn support_end(&self) -> Option<f64> {
        match &self.kind {
            DualKind::Capped { .. } | DualKind::PiecewisePower { .. } | DualKind::ShiftedExponential => {
                Some(1.0)
            }
            DualKind::Numeric(u) => {
                let m = u.marginal_at_zero();
                m.is_finite().then_some(m)
            }
            _ => None,
        }
    }

    /// Exponent of the power class when the family is known to have one.
    pub fn known_q(&self) -> Option<f64> {
        match &self.kind {
            DualKind::Power { q } => Some(*q),
            DualKind::PiecewisePower { p, .. } => Some(p / (p - 1.0)),
            DualKind::InverseQuartic => Some(-3.0),
            _ => None,
        }
    }

    fn fit_growth_constant(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for y in log_grid(1e-6, 1e6, 121) {
            let v = self.eval(y)?;
            worst = worst.max(v / (1.0 + y.powf(self.growth_q)));
        }
        Ok((worst * 1.01).max(f64::MIN_POSITIVE))
    }
}

/// `V(0) = sup U` and `V'(0) = -argmax`, estimated from the primal side.
fn numeric_boundary(u: &UtilitySpec) -> Result<(ExtendedReal, ExtendedReal)> {
    let far = u.eval(1e24)?;
    let mid = u.eval(1e12)?;
    if far - mid > 1e-9 * (1.0 + far.abs()) {
        return Ok((ExtendedReal::PosInfinity, ExtendedReal::NegInfinity));
    }
    // a maximiser that keeps moving as y -> 0 means V'(0) = -inf
    let (_, x1) = u.conjugate_numeric(1e-10)?;
    let (_, x2) = u.conjugate_numeric(1e-14)?;
    let vp0 = if x2 > x1 * (1.0 + 1e-6) + 1e-9 { ExtendedReal::NegInfinity } else { ExtendedReal::Finite(-x2) };
    Ok((ExtendedReal::Finite(far), vp0))
}
