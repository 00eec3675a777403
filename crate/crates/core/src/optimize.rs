//! Scalar search and fitting helpers shared by the solver modules.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
///
/// Returns `(argmin, min)`. The endpoints are evaluated too, so a minimum
/// sitting on the boundary of the interval is found exactly.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while (b - a).abs() > tol && iters < 400 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Ordinary least squares fit `y = slope * x + intercept`.
///
/// Returns `(slope, intercept, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::InsufficientData(format!("need at least 2 paired points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, intercept, r2))
}

/// Geometrically spaced grid from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > 0.0 && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Snap `v` to the nearest multiple of `1/1000` when within `tol`.
///
/// Regression exponents of exact power laws come back as e.g.
/// `-2.9999999999998`; downstream formulas (`p = q/(q-1)`) should see `-3`.
pub fn snap(v: f64, tol: f64) -> f64 {
    let r = (v * 1000.0).round() / 1000.0;
    if (v - r).abs() <= tol * r.abs().max(1.0) {
        r
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_quadratic_minimum() {
        let (x, fx) = golden_min(|x| (x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-12);
        assert!((x - 1.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-13);
    }

    #[test]
    fn golden_boundary_minimum() {
        let (x, fx) = golden_min(|x| x, 0.0, 1.0, 1e-10);
        assert_eq!(x, 0.0);
        assert_eq!(fx, 0.0);
    }

    #[test]
    fn exact_line_fit() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (s, i, r2) = linear_fit(&xs, &ys).unwrap();
        assert!((s + 0.5).abs() < 1e-14 && (i - 2.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn snapping() {
        assert_eq!(snap(-2.999_999_999_9, 1e-8), -3.0);
        assert_eq!(snap(-0.428_571, 1e-8), -0.428_571);
    }
}
