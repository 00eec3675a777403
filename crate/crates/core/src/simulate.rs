//! Monte Carlo wealth paths under feedback controls.
//!
//! Each path draws from its own ChaCha8 stream (`seed`, stream = path id), so
//! a batch is bit-identical regardless of how rayon schedules the work.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dual_solver::DualSurface;
use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::normal::{cdf, pdf, quantile};
use crate::primal_solver::allocation;
use crate::utility::UtilitySpec;

/// Largest `|π σ|` a single step may use.
pub const EXPOSURE_CAP: f64 = 50.0;
/// Paths above this count are never dumped to CSV by default.
pub const DUMP_LIMIT: usize = 100;

/// Feedback control: calendar time `t` and wealth `x` to the risky fraction π.
pub type Policy<'a> = dyn Fn(f64, f64) -> Result<f64> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeGrid {
    Uniform,
    /// `t_k = T(1 - (1 - k/N)²)`: steps shrink linearly toward the horizon,
    /// where controls built on time-to-horizon surfaces are steepest.
    #[default]
    Graded,
}

impl TimeGrid {
    pub fn nodes(self, horizon: f64, n_steps: usize) -> Vec<f64> {
        let n = n_steps as f64;
        (0..=n_steps)
            .map(|k| {
                let s = k as f64 / n;
                match self {
                    TimeGrid::Uniform => horizon * s,
                    TimeGrid::Graded => horizon * (1.0 - (1.0 - s) * (1.0 - s)),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub horizon: f64,
    /// One entry per completed path; aborted paths are left out.
    pub terminal_wealth: Vec<f64>,
    /// Sample mean of `exp(½∫|πσ|²dt)`. Reported, not certified.
    pub exp_moment: f64,
    pub clamp_count: u64,
    pub failures: u64,
}

struct PathOutcome {
    terminal: Option<f64>,
    exposure: f64,
    clamps: u64,
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One log-Euler path. `trace` receives `(t, X_t)` at every node when given.
fn run_path(
    policy: &Policy<'_>,
    market: &MarketParams,
    grid: &[f64],
    x0: f64,
    rng: &mut ChaCha8Rng,
    mut trace: Option<&mut Vec<(f64, f64)>>,
) -> PathOutcome {
    let sigma = market.sigma;
    let b = market.mu - market.r;
    let (mut x, mut exposure, mut clamps) = (x0, 0.0, 0u64);
    if let Some(tr) = trace.as_deref_mut() {
        tr.push((grid[0], x));
    }
    for w in grid.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        let dw = gauss(rng) * f64::sqrt(dt);
        if x > 0.0 {
            let mut pi = match policy(t, x) {
                Ok(pi) if pi.is_finite() => pi,
                _ => return PathOutcome { terminal: None, exposure, clamps },
            };
            if (pi * sigma).abs() > EXPOSURE_CAP {
                pi = (EXPOSURE_CAP / sigma).copysign(pi);
                clamps += 1;
            }
            let ps = pi * sigma;
            exposure += 0.5 * ps * ps * dt;
            let ln_x = x.ln() + (market.r + b * pi - 0.5 * ps * ps) * dt + ps * dw;
            x = if ln_x.is_finite() { ln_x.exp() } else { 0.0 };
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push((w[1], x));
        }
    }
    PathOutcome { terminal: Some(x), exposure, clamps }
}

fn check_sizes(x0: f64, horizon: f64, n_steps: usize, n_paths: usize) -> Result<()> {
    if !(x0 > 0.0) || !x0.is_finite() {
        return Err(Error::Domain(format!("x0 must be positive, got {x0}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if n_steps < 100 {
        return Err(Error::Precondition(format!("need at least 100 steps, got {n_steps}")));
    }
    if n_paths < 1000 {
        return Err(Error::Precondition(format!("need at least 1000 paths, got {n_paths}")));
    }
    Ok(())
}

/// Simulates on the default graded grid.
pub fn simulate_wealth(
    policy: &Policy<'_>,
    market: &MarketParams,
    horizon: f64,
    x0: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathBatch> {
    simulate_wealth_on(policy, market, horizon, x0, n_steps, n_paths, seed, TimeGrid::default())
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_wealth_on(
    policy: &Policy<'_>,
    market: &MarketParams,
    horizon: f64,
    x0: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<PathBatch> {
    check_sizes(x0, horizon, n_steps, n_paths)?;
    let nodes = grid.nodes(horizon, n_steps);
    let outcomes: Vec<PathOutcome> = (0..n_paths)
        .into_par_iter()
        .map(|i| run_path(policy, market, &nodes, x0, &mut path_rng(seed, i), None))
        .collect();
    let mut terminal_wealth = Vec::with_capacity(n_paths);
    let (mut moment, mut clamp_count, mut failures) = (0.0, 0u64, 0u64);
    for o in &outcomes {
        clamp_count += o.clamps;
        match o.terminal {
            Some(x) => {
                terminal_wealth.push(x);
                moment += o.exposure.exp();
            }
            None => failures += 1,
        }
    }
    let done = terminal_wealth.len().max(1) as f64;
    Ok(PathBatch {
        seed,
        n_paths,
        n_steps,
        horizon,
        terminal_wealth,
        exp_moment: moment / done,
        clamp_count,
        failures,
    })
}

/// Full `(t, X_t)` series for a handful of paths, same streams as the batch.
pub fn simulate_wealth_paths(
    policy: &Policy<'_>,
    market: &MarketParams,
    horizon: f64,
    x0: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<Vec<Vec<(f64, f64)>>> {
    if n_paths > DUMP_LIMIT {
        return Err(Error::Precondition(format!("path dump is limited to {DUMP_LIMIT} paths")));
    }
    check_sizes(x0, horizon, n_steps, 1000)?;
    let nodes = grid.nodes(horizon, n_steps);
    Ok((0..n_paths)
        .map(|i| {
            let mut tr = Vec::with_capacity(nodes.len());
            run_path(policy, market, &nodes, x0, &mut path_rng(seed, i), Some(&mut tr));
            tr
        })
        .collect())
}

/// CSV with columns `path_id,t,X`.
pub fn write_paths_csv<W: Write>(out: &mut W, paths: &[Vec<(f64, f64)>]) -> std::io::Result<()> {
    writeln!(out, "path_id,t,X")?;
    for (id, p) in paths.iter().enumerate() {
        for &(t, x) in p {
            writeln!(out, "{id},{},{}", crate::format::num(t), crate::format::num(x))?;
        }
    }
    Ok(())
}

fn mean_se(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut s1, mut s2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        s1 += v;
        s2 += v * v;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = if n > 1 { ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
    (mean, (var / nf).sqrt(), n)
}

/// Sample mean and standard error of `U(X_T)`.
pub fn estimate_value(batch: &PathBatch, utility: &UtilitySpec) -> Result<(f64, f64)> {
    if batch.terminal_wealth.is_empty() {
        return Err(Error::Precondition("empty path batch".into()));
    }
    let us = batch.terminal_wealth.iter().map(|&x| utility.eval(x)).collect::<Result<Vec<_>>>()?;
    let (mean, se, _) = mean_se(us.into_iter());
    Ok((mean, se))
}

/// Fraction of paths with `X_T < level`, with its standard error.
pub fn frequency_below(batch: &PathBatch, level: f64) -> (f64, f64) {
    let (m, _, n) = mean_se(batch.terminal_wealth.iter().map(|&x| if x < level { 1.0 } else { 0.0 }));
    (m, (m * (1.0 - m) / n as f64).sqrt())
}

pub fn constant_policy(pi: f64) -> impl Fn(f64, f64) -> Result<f64> + Sync {
    move |_, _| Ok(pi)
}

/// Optimal fraction for `min(x, H)` with horizon `T`: `A/x` with
/// `A = H e^{-rτ} φ(z) / (σ√τ)`, `z = Φ⁻¹(x e^{rτ}/H)`, zero once saturated.
pub fn capped_policy(market: &MarketParams, h: f64, horizon: f64) -> impl Fn(f64, f64) -> Result<f64> + Sync {
    let (r, sigma) = (market.r, market.sigma);
    move |t, x| {
        let tau = horizon - t;
        if !(tau > 0.0) {
            return Ok(0.0);
        }
        let boundary = h * (-r * tau).exp();
        if x >= boundary {
            return Ok(0.0);
        }
        let z = quantile(x / boundary);
        Ok(boundary * pdf(z) / (sigma * tau.sqrt()) / x)
    }
}

/// Feedback from a solved surface. One primal inversion per call, so only
/// practical for modest batches.
pub fn surface_policy(surface: &DualSurface, horizon: f64) -> impl Fn(f64, f64) -> Result<f64> + Sync + '_ {
    move |t, x| {
        let tau = horizon - t;
        if !(tau > 0.0) {
            return Ok(0.0);
        }
        allocation(surface, tau, x).map(|(_, pi)| pi)
    }
}

/// Exact optimal path for `min(x, H)`:
/// `X_t = H e^{-r(T-t)} Φ(Z_t)`, `Z_t = (Z_0√T + θt + W_t)/√(T-t)`,
/// with `X_T ∈ {0, H}` by the sign of `Z_0√T + θT + W_T`.
pub fn capped_wealth_path(
    market: &MarketParams,
    h: f64,
    horizon: f64,
    x0: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let z0 = capped_z0(market, h, horizon, x0)?;
    if n_steps == 0 {
        return Err(Error::Precondition("need at least one step".into()));
    }
    let nodes = TimeGrid::Uniform.nodes(horizon, n_steps);
    let mut rng = path_rng(seed, 0);
    let mut w = 0.0;
    let mut out = Vec::with_capacity(nodes.len());
    for (k, &t) in nodes.iter().enumerate() {
        if k > 0 {
            w += gauss(&mut rng) * f64::sqrt(t - nodes[k - 1]);
        }
        out.push((t, capped_exact_wealth(market, h, horizon, z0, t, w)));
    }
    Ok(out)
}

fn capped_z0(market: &MarketParams, h: f64, horizon: f64, x0: f64) -> Result<f64> {
    let ratio = x0 * (market.r * horizon).exp() / h;
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Domain(format!("x0 = {x0} outside (0, H e^(-rT))")));
    }
    Ok(quantile(ratio))
}

fn capped_exact_wealth(market: &MarketParams, h: f64, horizon: f64, z0: f64, t: f64, w: f64) -> f64 {
    let num = z0 * horizon.sqrt() + market.theta * t + w;
    let tau = horizon - t;
    if tau <= 0.0 {
        return if num > 0.0 { h } else { 0.0 };
    }
    h * (-market.r * tau).exp() * cdf(num / tau.sqrt())
}

/// Terminal values of the exact capped path; `W_T` is sampled directly.
pub fn capped_exact_terminal(
    market: &MarketParams,
    h: f64,
    horizon: f64,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let z0 = capped_z0(market, h, horizon, x0)?;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| {
            let w = gauss(&mut path_rng(seed, i));
            capped_exact_wealth(market, h, horizon, z0, horizon, w * horizon.sqrt())
        })
        .collect())
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetCheck {
    pub times: Vec<f64>,
    pub mean_xy: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `x0 · y0`.
    pub initial: f64,
}

impl BudgetCheck {
    pub fn holds(&self) -> bool {
        self.mean_xy
            .iter()
            .zip(&self.std_error)
            .all(|(m, se)| *m <= self.initial + 3.0 * se)
    }
}

/// Simulates `X` together with the dual path
/// `Y_t = y0 exp(-(r + θ²/2)t - θW_t)` on a uniform grid and reports the
/// sample mean of `X_t Y_t` at `T/2` and `T`.
#[allow(clippy::too_many_arguments)]
pub fn budget_check(
    policy: &Policy<'_>,
    market: &MarketParams,
    horizon: f64,
    x0: f64,
    y0: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<BudgetCheck> {
    check_sizes(x0, horizon, n_steps, n_paths)?;
    let n_steps = n_steps + n_steps % 2;
    let nodes = TimeGrid::Uniform.nodes(horizon, n_steps);
    let th = market.theta;
    let cols: Vec<Option<[f64; 2]>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut tr = Vec::with_capacity(nodes.len());
            let mut rng = path_rng(seed, i);
            run_path(policy, market, &nodes, x0, &mut rng, Some(&mut tr)).terminal?;
            // replay the same stream for W
            let mut rng = path_rng(seed, i);
            let mut w = 0.0;
            let mut out = [0.0; 2];
            for k in 1..nodes.len() {
                w += gauss(&mut rng) * f64::sqrt(nodes[k] - nodes[k - 1]);
                let y = y0 * (-(market.r + 0.5 * th * th) * nodes[k] - th * w).exp();
                if k == n_steps / 2 {
                    out[0] = tr[k].1 * y;
                }
                if k == n_steps {
                    out[1] = tr[k].1 * y;
                }
            }
            Some(out)
        })
        .collect();
    let done: Vec<[f64; 2]> = cols.into_iter().flatten().collect();
    if done.is_empty() {
        return Err(Error::Convergence("every path failed".into()));
    }
    let (m0, s0, _) = mean_se(done.iter().map(|c| c[0]));
    let (m1, s1, _) = mean_se(done.iter().map(|c| c[1]));
    Ok(BudgetCheck {
        times: vec![0.5 * horizon, horizon],
        mean_xy: vec![m0, m1],
        std_error: vec![s0, s1],
        initial: x0 * y0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::capped_ruin_prob;

    fn mkt() -> MarketParams {
        MarketParams::new(0.05, 0.10, 0.2).unwrap()
    }

    #[test]
    fn zero_policy_is_deterministic_growth() {
        let b = simulate_wealth(&constant_policy(0.0), &mkt(), 1.0, 1.0, 100, 1000, 7).unwrap();
        let want = 0.05f64.exp();
        assert!(b.terminal_wealth.iter().all(|x| (x - want).abs() < 1e-13));
        assert_eq!((b.failures, b.clamp_count), (0, 0));
        let u = UtilitySpec::capped_linear(1.0).unwrap();
        let b = simulate_wealth(&constant_policy(0.0), &mkt(), 1.0, 0.96, 100, 1000, 7).unwrap();
        assert_eq!(estimate_value(&b, &u).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn merton_mean_wealth() {
        let b = simulate_wealth_on(&constant_policy(2.5), &mkt(), 1.0, 1.0, 100, 20_000, 3, TimeGrid::Uniform).unwrap();
        let (m, se, _) = mean_se(b.terminal_wealth.iter().copied());
        assert!((m - 0.175f64.exp()).abs() < 3.0 * se, "{m} ± {se}");
        assert!((b.exp_moment - (0.5 * 0.25f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn merton_value() {
        let b = simulate_wealth(&constant_policy(2.5), &mkt(), 1.0, 1.0, 100, 20_000, 11).unwrap();
        let u = UtilitySpec::power(0.5).unwrap();
        let (m, se) = estimate_value(&b, &u).unwrap();
        assert!((m - 2.0 * 0.05625f64.exp()).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn seeded_batches_repeat() {
        let pol = capped_policy(&mkt(), 1.0, 1.0);
        let a = simulate_wealth(&pol, &mkt(), 1.0, 0.5, 200, 1000, 5).unwrap();
        let b = simulate_wealth(&pol, &mkt(), 1.0, 0.5, 200, 1000, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_wealth(&pol, &mkt(), 1.0, 0.5, 200, 1000, 6).unwrap();
        assert_ne!(a.terminal_wealth, c.terminal_wealth);
        assert!(a.terminal_wealth.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn capped_paths_polarise() {
        let pol = capped_policy(&mkt(), 1.0, 1.0);
        let middle = |n| {
            let b = simulate_wealth(&pol, &mkt(), 1.0, 0.5, n, 2000, 9).unwrap();
            b.terminal_wealth.iter().filter(|&&x| x > 0.01 && x < 0.99).count()
        };
        let (coarse, fine) = (middle(100), middle(1600));
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn exact_path_endpoints() {
        let p = capped_wealth_path(&mkt(), 1.0, 1.0, 0.5, 500, 1).unwrap();
        assert!((p[0].1 - 0.5).abs() < 1e-14);
        let last = p.last().unwrap().1;
        assert!(last == 0.0 || last == 1.0);
        assert!(capped_wealth_path(&mkt(), 1.0, 1.0, 0.96, 500, 1).is_err());
    }

    #[test]
    fn exact_ruin_frequency() {
        let xs = capped_exact_terminal(&mkt(), 1.0, 1.0, 0.5, 50_000, 2).unwrap();
        let ruined = xs.iter().filter(|&&x| x == 0.0).count() as f64 / xs.len() as f64;
        let (want, _) = capped_ruin_prob(&mkt(), 1.0, 1.0, 0.5).unwrap();
        let se = (want * (1.0 - want) / xs.len() as f64).sqrt();
        assert!((ruined - want).abs() < 3.0 * se);
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_distance(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
        assert!((ks_distance(&[0.0, 1.0], &[0.5, 1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn merton_budget_holds() {
        let c = budget_check(&constant_policy(2.5), &mkt(), 1.0, 1.0, 1.0, 100, 20_000, 4).unwrap();
        assert!(c.holds(), "{c:?}");
    }

    #[test]
    fn csv_dump() {
        let paths = simulate_wealth_paths(&constant_policy(0.0), &mkt(), 1.0, 1.0, 100, 2, 1, TimeGrid::Uniform).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &paths).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("path_id,t,X\n0,0.0000000000000000e0,1.0000000000000000e0\n"));
        assert_eq!(s.lines().count(), 1 + 2 * 101);
    }
}
