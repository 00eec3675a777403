//! Solver-versus-closed-form sweeps over the five builtin example families.

use rayon::prelude::*;
use serde::Serialize;

use crate::closed_forms::{capped_dual, capped_reference, ex4_reference, ex5_allocation, merton_reference, piecewise_reference};
use crate::dual_solver::DualSurface;
use crate::error::Result;
use crate::market::{derived_constants, MarketParams};
use crate::optimize::log_grid;
use crate::primal_solver::{allocation, value_u, Region};
use crate::utility::UtilitySpec;

pub const ORACLE_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleGrids {
    pub taus: Vec<f64>,
    pub ys: Vec<f64>,
    pub xs: Vec<f64>,
}

impl Default for OracleGrids {
    fn default() -> Self {
        OracleGrids {
            taus: vec![0.25, 1.0, 4.0, 8.0],
            ys: log_grid(0.05, 20.0, 13),
            xs: log_grid(0.05, 20.0, 13),
        }
    }
}

/// Worst relative deviation of one quantity for one family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub family: &'static str,
    pub quantity: &'static str,
    pub points: usize,
    pub max_rel_dev: f64,
    /// `(τ, state)` where the worst deviation occurred.
    pub worst_at: (f64, f64),
}

impl OracleCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_dev <= tol
    }
}

pub fn rel_dev(got: f64, want: f64) -> f64 {
    if got == want {
        return 0.0;
    }
    (got - want).abs() / want.abs()
}

type Probe<'a> = dyn Fn(f64, f64) -> Result<Option<(f64, f64)>> + Sync + 'a;

/// Evaluates `probe(τ, s)` on the grid; `None` marks a point outside the
/// quantity's domain (e.g. the saturated region).
fn sweep(family: &'static str, quantity: &'static str, taus: &[f64], states: &[f64], probe: &Probe<'_>) -> Result<OracleCheck> {
    let pts: Vec<(f64, f64)> = taus.iter().flat_map(|&t| states.iter().map(move |&s| (t, s))).collect();
    let devs: Vec<Result<Option<(f64, (f64, f64))>>> = pts
        .par_iter()
        .map(|&(t, s)| Ok(probe(t, s)?.map(|(got, want)| (rel_dev(got, want), (t, s)))))
        .collect();
    let mut worst = OracleCheck { family, quantity, points: 0, max_rel_dev: 0.0, worst_at: (f64::NAN, f64::NAN) };
    for d in devs {
        if let Some((dev, at)) = d? {
            worst.points += 1;
            if !(dev <= worst.max_rel_dev) {
                worst.max_rel_dev = dev;
                worst.worst_at = at;
            }
        }
    }
    Ok(worst)
}

pub fn power_checks(market: &MarketParams, g: &OracleGrids) -> Result<Vec<OracleCheck>> {
    let p = 0.5;
    let s = DualSurface::from_utility(*market, &UtilitySpec::power(p)?)?;
    let q = p / (p - 1.0);
    let lam = derived_constants(market, q)?.lambda;
    Ok(vec![
        sweep("power", "v", &g.taus, &g.ys, &|t, y| Ok(Some((s.eval_v(t, y)?, -y.powf(q) * (lam * t).exp() / q))))?,
        sweep("power", "v_y", &g.taus, &g.ys, &|t, y| Ok(Some((s.eval_vy(t, y)?, -y.powf(q - 1.0) * (lam * t).exp()))))?,
        sweep("power", "u", &g.taus, &g.xs, &|t, x| {
            Ok(Some((value_u(&s, t, x)?.u, merton_reference(market, p, t, x)?.u.unwrap_or(f64::NAN))))
        })?,
        sweep("power", "pi_frac", &g.taus, &g.xs, &|t, x| {
            Ok(Some((allocation(&s, t, x)?.1, merton_reference(market, p, t, x)?.pi_frac.unwrap_or(f64::NAN))))
        })?,
    ])
}

pub fn capped_checks(market: &MarketParams, g: &OracleGrids) -> Result<Vec<OracleCheck>> {
    let h = 1.0;
    let s = DualSurface::from_utility(*market, &UtilitySpec::capped_linear(h)?)?;
    let interior = |t: f64, x: f64| x < h * (-market.r * t).exp();
    Ok(vec![
        sweep("capped", "v", &g.taus, &g.ys, &|t, y| Ok(Some((s.eval_v(t, y)?, capped_dual(market, h, t, y)?.0))))?,
        sweep("capped", "v_y", &g.taus, &g.ys, &|t, y| Ok(Some((s.eval_vy(t, y)?, capped_dual(market, h, t, y)?.1))))?,
        sweep("capped", "u", &g.taus, &g.xs, &|t, x| {
            if !interior(t, x) {
                return Ok(None);
            }
            Ok(Some((value_u(&s, t, x)?.u, capped_reference(market, h, t, x)?.u.unwrap_or(f64::NAN))))
        })?,
        sweep("capped", "A", &g.taus, &g.xs, &|t, x| {
            if !interior(t, x) {
                return Ok(None);
            }
            Ok(Some((allocation(&s, t, x)?.0, capped_reference(market, h, t, x)?.amount.unwrap_or(f64::NAN))))
        })?,
        // saturated points must come back exactly as (H, 0)
        sweep("capped", "saturated", &g.taus, &g.xs, &|t, x| {
            if interior(t, x) {
                return Ok(None);
            }
            let pt = value_u(&s, t, x)?;
            let ok = pt.region == Region::Saturated && pt.u == h && allocation(&s, t, x)?.0 == 0.0;
            Ok(Some((if ok { 1.0 } else { 0.0 }, 1.0)))
        })?,
    ])
}

pub fn piecewise_checks(market: &MarketParams, g: &OracleGrids) -> Result<Vec<OracleCheck>> {
    let (h, p) = (1.0, 0.5);
    let s = DualSurface::from_utility(*market, &UtilitySpec::piecewise_power(h, p)?)?;
    Ok(vec![
        sweep("piecewise_power", "v", &g.taus, &g.ys, &|t, y| {
            Ok(Some((s.eval_v(t, y)?, piecewise_reference(market, h, p, t, y)?.0)))
        })?,
        sweep("piecewise_power", "v_y", &g.taus, &g.ys, &|t, y| {
            Ok(Some((s.eval_vy(t, y)?, piecewise_reference(market, h, p, t, y)?.1)))
        })?,
    ])
}

pub fn inverse_quartic_checks(market: &MarketParams, g: &OracleGrids) -> Result<Vec<OracleCheck>> {
    let s = DualSurface::from_utility(*market, &UtilitySpec::inverse_quartic()?)?;
    let reference = |t, x| ex4_reference(market, t, x);
    Ok(vec![
        sweep("inverse_quartic", "v", &g.taus, &g.xs, &|t, x| {
            let r = reference(t, x)?;
            Ok(Some((s.eval_v(t, r.y.unwrap_or(f64::NAN))?, r.v.unwrap_or(f64::NAN))))
        })?,
        sweep("inverse_quartic", "y", &g.taus, &g.xs, &|t, x| {
            Ok(Some((value_u(&s, t, x)?.y, reference(t, x)?.y.unwrap_or(f64::NAN))))
        })?,
        sweep("inverse_quartic", "u", &g.taus, &g.xs, &|t, x| {
            Ok(Some((value_u(&s, t, x)?.u, reference(t, x)?.u.unwrap_or(f64::NAN))))
        })?,
        sweep("inverse_quartic", "A", &g.taus, &g.xs, &|t, x| {
            Ok(Some((allocation(&s, t, x)?.0, reference(t, x)?.amount.unwrap_or(f64::NAN))))
        })?,
        sweep("inverse_quartic", "turnpike_error", &g.taus, &g.xs, &|t, x| {
            Ok(Some((crate::turnpike::turnpike_error(&s, t, x, 0.75)?, reference(t, x)?.exact_error.unwrap_or(f64::NAN))))
        })?,
    ])
}

pub fn shifted_exponential_checks(market: &MarketParams, g: &OracleGrids) -> Result<Vec<OracleCheck>> {
    let s = DualSurface::from_utility(*market, &UtilitySpec::shifted_exponential()?)?;
    let ts = market.theta_over_sigma();
    Ok(vec![
        sweep("shifted_exponential", "A_dual", &g.taus, &g.ys, &|t, y| {
            Ok(Some((ts * y * s.eval_vyy(t, y)?, ex5_allocation(market, t, y)?)))
        })?,
        sweep("shifted_exponential", "A", &g.taus, &g.xs, &|t, x| {
            let pt = value_u(&s, t, x)?;
            if pt.region == Region::Saturated {
                return Ok(None);
            }
            Ok(Some((allocation(&s, t, x)?.0, ex5_allocation(market, t, pt.y)?)))
        })?,
    ])
}

/// All five families.
pub fn run_oracle_suite(market: &MarketParams, grids: &OracleGrids) -> Result<Vec<OracleCheck>> {
    let mut out = power_checks(market, grids)?;
    out.extend(capped_checks(market, grids)?);
    out.extend(piecewise_checks(market, grids)?);
    out.extend(inverse_quartic_checks(market, grids)?);
    out.extend(shifted_exponential_checks(market, grids)?);
    Ok(out)
}
