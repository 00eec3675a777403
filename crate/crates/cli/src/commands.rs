//! One function per subcommand. Each returns its output files in memory; the
//! caller writes them only once the whole command has succeeded.

use serde::Serialize;
use serde_json::{json, Value};
use turnpike_core::format::num;
use turnpike_core::oracle::{run_oracle_suite, OracleGrids, ORACLE_TOLERANCE};
use turnpike_core::primal_solver::value_u;
use turnpike_core::simulate::{
    capped_policy, constant_policy, estimate_value, simulate_wealth, simulate_wealth_paths, surface_policy,
    write_paths_csv, Policy, TimeGrid,
};
use turnpike_core::turnpike::{bound_constants, error_bound, merton_allocation};
use turnpike_core::utility::UtilityKind;
use turnpike_core::{AsymptoticKind, DualSurface, MarketParams, TurnpikeReport};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    /// Printed to stdout after the files are written.
    pub summary: String,
    /// Set when a check ran to completion but did not hold.
    pub failed: Option<String>,
}

fn surface(cfg: &RunConfig) -> Result<DualSurface, CliError> {
    Ok(DualSurface::from_utility_with(cfg.market, &cfg.utility, cfg.quad)?)
}

/// Serialises with every float in the 17-significant-digit CSV format;
/// non-finite values become `null`.
pub fn json17<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Failed(format!("serialisation: {e}")))?;
    let mut out = String::new();
    write_json(&v, &mut out);
    out.push('\n');
    Ok(out)
}

fn write_json(v: &Value, out: &mut String) {
    match v {
        Value::Number(n) if n.is_f64() => out.push_str(&num(n.as_f64().unwrap_or(f64::NAN))),
        Value::Array(xs) => {
            out.push('[');
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_json(x, out);
            }
            out.push(']');
        }
        Value::Object(m) => {
            out.push('{');
            for (i, (k, x)) in m.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_json(x, out);
            }
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

pub fn value(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = surface(cfg)?;
    let mut csv = String::from("tau,x,region,y,u,A,pi_frac\n");
    for &tau in &cfg.grids.tau {
        for &x in &cfg.grids.x {
            let p = value_u(&s, tau, x)?;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                num(tau),
                num(x),
                p.region.as_str(),
                num(p.y),
                num(p.u),
                num(p.amount),
                num(p.pi_frac)
            ));
        }
    }
    Ok(Outcome { files: vec![("value.csv".into(), csv)], ..Default::default() })
}

/// Merton exponent for the turnpike target: configured, or read off the
/// classified dual growth.
fn target_exponent(cfg: &RunConfig, s: &DualSurface) -> Option<f64> {
    cfg.turnpike.p.or(match (s.class.kind, s.class.q) {
        (AsymptoticKind::PowerQ, Some(q)) => Some(q / (q - 1.0)),
        (AsymptoticKind::Log, _) => Some(0.0),
        _ => None,
    })
}

pub fn allocate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = surface(cfg)?;
    let p = target_exponent(cfg, &s);
    let mut csv = String::from("tau,x,region,A,pi_frac,merton_target\n");
    for &tau in &cfg.grids.tau {
        for &x in &cfg.grids.x {
            let pt = value_u(&s, tau, x)?;
            let target = match p {
                Some(p) => merton_allocation(&cfg.market, p, x)?,
                None => f64::NAN,
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                num(tau),
                num(x),
                pt.region.as_str(),
                num(pt.amount),
                num(pt.pi_frac),
                num(target)
            ));
        }
    }
    Ok(Outcome { files: vec![("allocation.csv".into(), csv)], ..Default::default() })
}

pub fn turnpike(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = surface(cfg)?;
    let p = target_exponent(cfg, &s).ok_or_else(|| {
        CliError::Config("utility has no power limit; set turnpike.p to choose a Merton target".into())
    })?;
    let mut out = Outcome::default();
    let single = cfg.grids.x.len() == 1;
    for (i, &x) in cfg.grids.x.iter().enumerate() {
        let rep = TurnpikeReport::build(&s, x, p, &cfg.grids.tau, cfg.turnpike.window)?;
        let name = if single { "turnpike.csv".to_string() } else { format!("turnpike_{i}.csv") };
        out.summary.push_str(&format!("{name}: x={} dominance_ok={:?}\n", num(x), rep.dominance_ok));
        if rep.dominance_ok == Some(false) {
            out.failed = Some(format!("bound does not dominate the measured error at x = {x}"));
        }
        out.files.push((name, rep.to_csv()));
    }
    Ok(out)
}

pub fn bound(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = surface(cfg)?;
    let c = bound_constants(&cfg.market, &s.class)?;
    let mut csv = String::from("x,t,bound\n");
    for &x in &cfg.grids.x {
        for &t in &cfg.grids.tau {
            let b = if t > c.t_bar { error_bound(&c, x, t)? } else { f64::NAN };
            csv.push_str(&format!("{},{},{}\n", num(x), num(t), num(b)));
        }
    }
    let d: Vec<Value> = cfg.grids.x.iter().map(|&x| json!({"x": x, "c": c.c_of_x(x), "d": c.d_of_x(x)})).collect();
    let doc = json!({"constants": c, "per_x": d});
    Ok(Outcome { files: vec![("bound.csv".into(), csv), ("bound.json".into(), json17(&doc)?)], ..Default::default() })
}

const DEFAULT_MARKET: (f64, f64, f64) = (0.05, 0.10, 0.2);

pub fn validate(cfg: Option<&RunConfig>) -> Result<Outcome, CliError> {
    let market = match cfg {
        Some(c) => c.market,
        None => MarketParams::new(DEFAULT_MARKET.0, DEFAULT_MARKET.1, DEFAULT_MARKET.2)?,
    };
    let grids = match cfg {
        Some(c) => OracleGrids { taus: c.grids.tau.clone(), ys: c.grids.y.clone(), xs: c.grids.x.clone() },
        None => OracleGrids::default(),
    };
    if grids.taus.iter().any(|t| !(*t > 0.0)) {
        return Err(CliError::Config("validate needs tau > 0 on every grid point".into()));
    }
    let checks = run_oracle_suite(&market, &grids)?;
    let mut csv = String::from("family,quantity,points,max_rel_dev,tolerance,status\n");
    let mut summary = String::new();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for c in &checks {
        let ok = c.passed(ORACLE_TOLERANCE);
        let status = if ok { "PASS" } else { "FAIL" };
        worst = worst.max(c.max_rel_dev);
        if !ok {
            failures.push(format!("{}/{}", c.family, c.quantity));
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{status}\n",
            c.family,
            c.quantity,
            c.points,
            num(c.max_rel_dev),
            num(ORACLE_TOLERANCE)
        ));
        summary.push_str(&format!(
            "{status} {:<20} {:<15} points={:<4} max_rel_dev={}\n",
            c.family,
            c.quantity,
            c.points,
            num(c.max_rel_dev)
        ));
    }
    summary.push_str(&format!("max relative deviation {} (tolerance {})\n", num(worst), num(ORACLE_TOLERANCE)));
    let failed = (!failures.is_empty()).then(|| failures.join(", "));
    Ok(Outcome { files: vec![("validate.csv".into(), csv)], summary, failed })
}

#[derive(Serialize)]
struct SimulateSummary {
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    horizon: f64,
    x0: f64,
    policy: &'static str,
    mean_utility: f64,
    std_error: f64,
    exp_moment: f64,
    clamp_count: u64,
    failures: u64,
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mc = &cfg.mc;
    let ts = cfg.market.theta_over_sigma();
    let s;
    let (policy, name): (Box<Policy<'_>>, &'static str) = match *cfg.utility.kind() {
        UtilityKind::Power { p } => (Box::new(constant_policy(ts / (1.0 - p))), "merton"),
        UtilityKind::CappedLinear { h } => (Box::new(capped_policy(&cfg.market, h, mc.horizon)), "capped_closed_form"),
        _ => {
            s = surface(cfg)?;
            (Box::new(surface_policy(&s, mc.horizon)), "surface")
        }
    };
    let batch = simulate_wealth(&*policy, &cfg.market, mc.horizon, mc.x0, mc.n_steps, mc.n_paths, mc.seed)?;
    let (mean, se) = estimate_value(&batch, &cfg.utility)?;
    let mut csv = String::from("path_id,X_T\n");
    for (i, x) in batch.terminal_wealth.iter().enumerate() {
        csv.push_str(&format!("{i},{}\n", num(*x)));
    }
    let summary = SimulateSummary {
        n_paths: mc.n_paths,
        n_steps: mc.n_steps,
        seed: mc.seed,
        horizon: mc.horizon,
        x0: mc.x0,
        policy: name,
        mean_utility: mean,
        std_error: se,
        exp_moment: batch.exp_moment,
        clamp_count: batch.clamp_count,
        failures: batch.failures,
    };
    let mut files = vec![("simulate.csv".into(), csv), ("simulate.json".into(), json17(&summary)?)];
    if mc.dump_paths > 0 {
        let paths = simulate_wealth_paths(&*policy, &cfg.market, mc.horizon, mc.x0, mc.n_steps, mc.dump_paths, mc.seed, TimeGrid::default())?;
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &paths)?;
        files.push(("paths.csv".into(), String::from_utf8(buf).map_err(|e| CliError::Failed(e.to_string()))?));
    }
    Ok(Outcome { files, summary: format!("E[U(X_T)] = {} ± {}\n", num(mean), num(se)), failed: None })
}

pub fn classify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = surface(cfg)?;
    let doc = json17(&s.class)?;
    Ok(Outcome { files: vec![("classify.json".into(), doc.clone())], summary: doc, failed: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_floats_use_csv_format() {
        let s = json17(&json!({"b": 0.5, "a": [1, f64::NAN], "k": "none"})).unwrap();
        assert_eq!(s, "{\"a\":[1,null],\"b\":5.0000000000000000e-1,\"k\":\"none\"}\n");
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"], 0.5);
    }
}
