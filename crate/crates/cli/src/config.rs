//! JSON run configuration. Unknown keys are rejected with their full path.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use turnpike_core::market::project_theta_hat;
use turnpike_core::optimize::log_grid;
use turnpike_core::{ConeSpec, MarketParams, QuadratureConfig, UtilitySpec};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketBlock {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    #[serde(default = "default_cone")]
    pub cone: String,
}

fn default_cone() -> String {
    "unconstrained".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityBlock {
    Power {
        p: f64,
    },
    CappedLinear {
        h: f64,
    },
    PiecewisePower {
        h: f64,
        p: f64,
    },
    InverseQuartic,
    ShiftedExponential,
    LogPower {
        p: f64,
    },
}

impl UtilityBlock {
    pub fn build(&self) -> turnpike_core::Result<UtilitySpec> {
        match *self {
            UtilityBlock::Power { p } => UtilitySpec::power(p),
            UtilityBlock::CappedLinear { h } => UtilitySpec::capped_linear(h),
            UtilityBlock::PiecewisePower { h, p } => UtilitySpec::piecewise_power(h, p),
            UtilityBlock::InverseQuartic => UtilitySpec::inverse_quartic(),
            UtilityBlock::ShiftedExponential => UtilitySpec::shifted_exponential(),
            UtilityBlock::LogPower { p } => UtilitySpec::log_power(p),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    pub tau: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids { tau: vec![0.25, 1.0, 4.0, 8.0], x: log_grid(0.05, 20.0, 13), y: log_grid(0.05, 20.0, 13) }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McBlock {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub horizon: f64,
    pub x0: f64,
    /// Leading paths written to `paths.csv`; 0 disables the dump.
    pub dump_paths: usize,
}

impl Default for McBlock {
    fn default() -> Self {
        McBlock { n_paths: 10_000, n_steps: 200, seed: 0, horizon: 1.0, x0: 0.5, dump_paths: 0 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurnpikeBlock {
    /// Target Merton exponent; taken from the classified `q` when absent.
    pub p: Option<f64>,
    pub window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub market: MarketBlock,
    pub utility: UtilityBlock,
    #[serde(default)]
    pub quad: QuadratureConfig,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub mc: McBlock,
    #[serde(default)]
    pub turnpike: TurnpikeBlock,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A configuration whose blocks have all been validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub market: MarketParams,
    pub utility: UtilitySpec,
    pub quad: QuadratureConfig,
    pub grids: Grids,
    pub mc: McBlock,
    pub turnpike: TurnpikeBlock,
    pub output_dir: PathBuf,
}

fn invalid(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{what}: {e}"))
}

pub fn parse_config_str(text: &str) -> Result<RawConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!("at `{path}` (line {}, column {}): {inner}", inner.line(), inner.column()))
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(&format!("cannot read {}", path.display()), e))?;
    parse_config_str(&text)?.validate()
}

impl RawConfig {
    pub fn validate(self) -> Result<RunConfig, CliError> {
        let m = &self.market;
        let market = MarketParams::new(m.r, m.mu, m.sigma).map_err(|e| invalid("market", e))?;
        let cone = ConeSpec::from_name(&m.cone, vec![m.mu - m.r]).map_err(|e| invalid("market.cone", e))?;
        let (_, theta_hat) = project_theta_hat(&[market.theta], &cone).map_err(|e| invalid("market.cone", e))?;
        let market = MarketParams::with_theta(market.r, theta_hat, market.sigma).map_err(|e| invalid("market", e))?;
        market.require_positive_theta().map_err(|e| invalid("market", e))?;
        let utility = self.utility.build().map_err(|e| invalid("utility", e))?;
        self.quad.validate().map_err(|e| invalid("quad", e))?;
        let g = &self.grids;
        if let Some(t) = g.tau.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(invalid("grids.tau", format!("entries must be finite and >= 0, got {t}")));
        }
        for (name, v) in [("grids.x", &g.x), ("grids.y", &g.y)] {
            if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(invalid(name, format!("entries must be finite and > 0, got {x}")));
            }
        }
        if !(self.mc.horizon > 0.0 && self.mc.x0 > 0.0) {
            return Err(invalid("mc", "horizon and x0 must be positive"));
        }
        if self.mc.n_steps < 100 || self.mc.n_paths < 1000 {
            return Err(invalid("mc", "need n_steps >= 100 and n_paths >= 1000"));
        }
        if let Some(p) = self.turnpike.p {
            if !(p < 1.0) {
                return Err(invalid("turnpike.p", format!("must be below 1, got {p}")));
            }
        }
        Ok(RunConfig {
            market,
            utility,
            quad: self.quad,
            grids: self.grids,
            mc: self.mc,
            turnpike: self.turnpike,
            output_dir: self.output_dir,
        })
    }
}

/// `a:b:n` to `n` evenly spaced points from `a` to `b` inclusive.
pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("grid `{s}` is not of the form a:b:n"));
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else { return Err(bad()) };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    match n {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
    }
}
