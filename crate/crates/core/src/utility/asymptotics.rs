//! Detection of the small-`y` behaviour of `V` from samples.

use serde::Serialize;

use super::DualUtilitySpec;
use crate::error::{Error, Result};
use crate::optimize::{linear_fit, log_grid, snap};

/// Slopes over the three lowest decades may differ by at most this much.
const SLOPE_DRIFT_TOL: f64 = 0.02;
/// Implied prefactors over the same decades may differ by at most this (relative).
const PREFACTOR_DRIFT_TOL: f64 = 0.01;
/// Residuals below this fraction of `|k/q|` are treated as rounding noise.
const RATE_NOISE_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymptoticKind {
    PowerQ,
    Log,
    FiniteSaturation,
    None,
}

/// Result of [`classify_asymptotics`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticClass {
    pub kind: AsymptoticKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_alpha1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merton_p: Option<f64>,
    /// True when the rate residual vanished identically (exact power law).
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub exact: bool,
}

impl AsymptoticClass {
    fn none() -> Self {
        AsymptoticClass {
            kind: AsymptoticKind::None,
            q: None,
            scale_k: None,
            rate_alpha1: None,
            rate_k: None,
            threshold_delta: None,
            merton_p: None,
            exact: false,
        }
    }

    /// Whether `(q, α₁, K)` are available for the explicit bound.
    pub fn has_rate_constants(&self) -> bool {
        self.rate_alpha1.is_some() && self.rate_k.is_some()
    }
}

/// Constants `(K, α₁, δ)` of `|V(y)/y^q + k/q| <= K y^{α₁}` on `y <= δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub k_const: f64,
    pub alpha1: f64,
    pub delta: f64,
    /// The residual is identically zero; `k_const` is 0.
    pub exact: bool,
}

/// Log-spaced probe grid over `[1e-8, 1e-2]`, ten points per decade.
pub fn default_probe_grid() -> Vec<f64> {
    log_grid(1e-8, 1e-2, 61)
}

/// OLS slope of `g` against `ln y` for the probe points inside each of the
/// three lowest decades covered by `ys` (sorted ascending).
fn decade_slopes(ys: &[f64], gs: &[f64]) -> Option<[f64; 3]> {
    let lo = ys.first()?.log10().floor();
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let (a, b) = (10f64.powf(lo + k as f64), 10f64.powf(lo + k as f64 + 1.0));
        let (mut xs, mut vs) = (Vec::new(), Vec::new());
        for (&y, &g) in ys.iter().zip(gs) {
            if y >= a * (1.0 - 1e-12) && y <= b * (1.0 + 1e-12) && g.is_finite() {
                xs.push(y.ln());
                vs.push(g);
            }
        }
        *slot = linear_fit(&xs, &vs).ok()?.0;
    }
    Some(out)
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// Prefactors `f(y) / y^q` at the four decade endpoints; `None` if unstable.
fn stable_prefactor(f: impl Fn(f64) -> f64, q: f64, y0: f64) -> Option<f64> {
    let c: Vec<f64> = (0..4)
        .map(|k| {
            let y = y0 * 10f64.powi(k);
            f(y) / y.powf(q)
        })
        .collect();
    let mean = c.iter().sum::<f64>() / 4.0;
    (mean.is_finite() && mean > 0.0 && spread(&c) <= PREFACTOR_DRIFT_TOL * mean).then_some(c[0])
}

/// Classify `V` near zero as power, logarithmic, finite-saturation or none.
///
/// Three regressions are tried in order over the three lowest decades of
/// `probe_grid`: `V` against `ln y`, `ln V` against `ln y`, and
/// `ln(V(0) - V)` against `ln y`. A candidate is accepted only if the decade
/// slopes drift by less than 0.02 and the implied prefactor is stable to 1%.
pub fn classify_asymptotics(dual: &DualUtilitySpec, probe_grid: &[f64]) -> AsymptoticClass {
    let mut ys: Vec<f64> = probe_grid.iter().cloned().filter(|y| *y > 0.0).collect();
    ys.sort_by(|a, b| a.total_cmp(b));
    let vs: Vec<f64> = ys.iter().map(|&y| dual.eval(y).unwrap_or(f64::NAN)).collect();
    if ys.len() < 8 || vs.iter().any(|v| !v.is_finite()) {
        return AsymptoticClass::none();
    }
    let y0 = 10f64.powf(ys[0].log10().floor());
    let v = |y: f64| dual.eval(y).unwrap_or(f64::NAN);

    // log: V ≈ -k ln y
    if let Some(s) = decade_slopes(&ys, &vs) {
        let mean = s.iter().sum::<f64>() / 3.0;
        if mean < 0.0 && spread(&s) < SLOPE_DRIFT_TOL * mean.abs() {
            let k = snap(-mean, 1e-6);
            return finish(dual, AsymptoticKind::Log, 0.0, k, &ys);
        }
    }

    // power: V ≈ -(k/q) y^q
    if !dual.v0().is_finite() {
        let lv: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
        if let Some(s) = decade_slopes(&ys, &lv) {
            let q = snap(s[0], 1e-6);
            if q < 0.0 && spread(&s) < SLOPE_DRIFT_TOL {
                if let Some(c) = stable_prefactor(v, q, y0) {
                    return finish(dual, AsymptoticKind::PowerQ, q, snap(-q * c, 1e-8), &ys);
                }
            }
        }
        return AsymptoticClass::none();
    }

    // finite saturation: V(0) - V ≈ (k/q) y^q, 0 < q < 1
    let v0 = dual.v0().finite().unwrap_or(f64::NAN);
    let d: Vec<f64> = vs.iter().map(|v| (v0 - v).ln()).collect();
    if let Some(s) = decade_slopes(&ys, &d) {
        let q = snap(s[0], 1e-6);
        if q > 0.0 && q < 1.0 - SLOPE_DRIFT_TOL && spread(&s) < SLOPE_DRIFT_TOL {
            if let Some(c) = stable_prefactor(|y| v0 - v(y), q, y0) {
                return finish(dual, AsymptoticKind::FiniteSaturation, q, snap(q * c, 1e-8), &ys);
            }
        }
    }
    AsymptoticClass::none()
}

fn finish(dual: &DualUtilitySpec, kind: AsymptoticKind, q: f64, k: f64, _ys: &[f64]) -> AsymptoticClass {
    let mut class = AsymptoticClass {
        kind,
        q: Some(q),
        scale_k: Some(k),
        merton_p: Some(q / (q - 1.0)),
        ..AsymptoticClass::none()
    };
    if let Ok(rc) = rate_residual_fit(dual, kind, q, k) {
        class.rate_alpha1 = Some(rc.alpha1);
        class.rate_k = Some(rc.k_const);
        class.threshold_delta = Some(rc.delta);
        class.exact = rc.exact;
    }
    class
}

/// Fit `(K, α₁, δ)` for a power-class dual with exponent `q`.
///
/// `k` is read off the smallest probe point; the residual
/// `|V(y)/y^q + k/q|` is regressed against `ln y` on `y <= δ = 1` and
/// `α₁` is capped at `1 - q`. `K` makes the inequality hold on the probe
/// grid up to a rounding floor of `1e-7 |k/q|`. An identically vanishing residual returns the
/// `exact` sentinel with `K = 0`.
pub fn rate_constants(dual: &DualUtilitySpec, q: f64) -> Result<RateConstants> {
    if !(q < 0.0) {
        return Err(Error::Precondition(format!("rate constants need q < 0, got {q}")));
    }
    let y = 1e-8;
    let k = snap(-q * dual.eval(y)? / y.powf(q), 1e-8);
    rate_residual_fit(dual, AsymptoticKind::PowerQ, q, k)
}

fn rate_residual_fit(dual: &DualUtilitySpec, kind: AsymptoticKind, q: f64, k: f64) -> Result<RateConstants> {
    let delta = 1.0;
    let v0 = dual.v0().finite().unwrap_or(0.0);
    let scale = match kind {
        AsymptoticKind::Log => k,
        _ => (k / q).abs(),
    };
    let rho = |y: f64| -> Result<f64> {
        let v = dual.eval(y)?;
        Ok(match kind {
            AsymptoticKind::PowerQ => (v / y.powf(q) + k / q).abs(),
            AsymptoticKind::Log => (v + k * y.ln()).abs(),
            AsymptoticKind::FiniteSaturation => ((v - v0) / y.powf(q) + k / q).abs(),
            AsymptoticKind::None => f64::NAN,
        })
    };
    let grid = log_grid(1e-8, delta, 97);
    let mut pts = Vec::with_capacity(grid.len());
    for &y in &grid {
        pts.push((y, rho(y)?));
    }
    let floor = RATE_NOISE_FLOOR * scale;
    let live: Vec<(f64, f64)> = pts.iter().cloned().filter(|&(_, r)| r > floor).collect();
    let cap = 1.0 - q;
    if live.is_empty() {
        return Ok(RateConstants { k_const: 0.0, alpha1: cap, delta, exact: true });
    }
    // the three lowest decades of the residual that rise above the noise floor
    let first = live[0].0;
    let window: Vec<&(f64, f64)> = live.iter().filter(|(y, _)| *y <= first * 1e3 * (1.0 + 1e-12)).collect();
    let xs: Vec<f64> = window.iter().map(|(y, _)| y.ln()).collect();
    let ls: Vec<f64> = window.iter().map(|(_, r)| r.ln()).collect();
    let (slope, _, _) = linear_fit(&xs, &ls)?;
    let slope = snap(slope, 1e-4);
    if !(slope > 0.0) {
        return Err(Error::Convergence(format!("rate residual does not decay (slope {slope})")));
    }
    let alpha1 = slope.min(cap);
    // points under the floor are rounding noise of size ~1e-16 |k/q| and are
    // covered by the inequality up to that floor
    let kc = live.iter().map(|&(y, r)| r / y.powf(alpha1)).fold(0.0f64, f64::max);
    Ok(RateConstants { k_const: snap(kc, 1e-8), alpha1, delta, exact: false })
}
