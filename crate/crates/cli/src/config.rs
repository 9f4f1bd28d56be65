//! Run configurations. Every command reads an optional JSON file, applies
//! command-line overrides on top, validates, and echoes the result next to
//! its outputs so that the run can be replayed with `--config`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use symmix::estimator::linear_grid;
use symmix::{BandwidthRule, Dataset, FitOptions, KernelFamily, ParamSpace};

use crate::error::{CliError, CliResult};

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// `local`, `fixed:H`, `rate:C` or `rate:C:ALPHA`.
pub fn parse_bandwidth(s: &str) -> Result<BandwidthRule, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("bad number '{t}': {e}"));
    match parts.as_slice() {
        ["local"] => Ok(BandwidthRule::Local),
        ["fixed", h] => Ok(BandwidthRule::Fixed { h: num(h)? }),
        ["rate", c] => Ok(BandwidthRule::Rate { c: num(c)?, alpha: 1.0 }),
        ["rate", c, alpha] => Ok(BandwidthRule::Rate {
            c: num(c)?,
            alpha: num(alpha)?,
        }),
        _ => Err(format!(
            "expected local, fixed:H, rate:C or rate:C:ALPHA, got '{s}'"
        )),
    }
}

/// `LO:HI:K`, K equally spaced points including both ends.
pub fn parse_grid(s: &str) -> Result<Vec<Vec<f64>>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, k] = parts.as_slice() else {
        return Err(format!("expected LO:HI:K, got '{s}'"));
    };
    let lo: f64 = lo.parse().map_err(|e| format!("bad grid start '{lo}': {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("bad grid end '{hi}': {e}"))?;
    let k: usize = k.parse().map_err(|e| format!("bad grid size '{k}': {e}"))?;
    if k == 0 || !lo.is_finite() || !hi.is_finite() || (k > 1 && lo >= hi) {
        return Err(format!("grid '{s}' needs finite LO < HI and K >= 1"));
    }
    Ok(linear_grid(lo, hi, k))
}

/// Comma-separated coordinates of one design point.
pub fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad coordinate '{t}': {e}"))
        })
        .collect()
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub frac: f64,
    pub pi_bar: f64,
    pub bandwidth: BandwidthRule,
    pub n_mc: Option<usize>,
    pub kernel: KernelFamily,
    pub strict_theta: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let d = FitOptions::default();
        EstimatorConfig {
            frac: d.frac,
            pi_bar: d.pi_bar,
            bandwidth: d.bandwidth,
            n_mc: d.n_mc,
            kernel: d.kernel,
            strict_theta: d.strict_theta,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> CliResult<()> {
        if !(self.frac > 0.0 && self.frac <= 1.0) {
            return Err(invalid(format!("frac must lie in (0, 1], got {}", self.frac)));
        }
        if !(self.pi_bar > 0.0 && self.pi_bar < 1.0) {
            return Err(invalid(format!("pi_bar must lie in (0, 1), got {}", self.pi_bar)));
        }
        if self.n_mc == Some(0) {
            return Err(invalid("n_mc must be positive"));
        }
        let bad = match self.bandwidth {
            BandwidthRule::Local => false,
            BandwidthRule::Fixed { h } => !(h > 0.0 && h.is_finite()),
            BandwidthRule::Rate { c, alpha } => !(c > 0.0 && c.is_finite() && alpha > 0.0 && alpha.is_finite()),
        };
        if bad {
            return Err(invalid(format!("invalid bandwidth rule {:?}", self.bandwidth)));
        }
        Ok(())
    }

    pub fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions {
            frac: self.frac,
            pi_bar: self.pi_bar,
            bandwidth: self.bandwidth,
            n_mc: self.n_mc,
            seed,
            kernel: self.kernel,
            strict_theta: self.strict_theta,
            ..FitOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: String,
    pub n: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            scenario: "G".into(),
            n: 400,
            seed: 0,
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> CliResult<()> {
        symmix::Scenario::by_name(&self.scenario)?;
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        Ok(())
    }
}

/// Optional overrides of the parameter box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub pi_lo: Option<f64>,
    pub pi_hi: Option<f64>,
    pub loc_lo: Option<f64>,
    pub loc_hi: Option<f64>,
}

impl BoundsConfig {
    fn is_empty(&self) -> bool {
        *self == BoundsConfig::default()
    }

    pub fn resolve(&self, data: &Dataset, strict: bool) -> CliResult<Option<ParamSpace>> {
        if self.is_empty() {
            return Ok(None);
        }
        let base = ParamSpace::for_responses(data, strict)?;
        let space = ParamSpace::new(
            self.pi_lo.unwrap_or(base.pi_lo),
            self.pi_hi.unwrap_or(base.pi_hi),
            self.loc_lo.unwrap_or(base.loc_lo),
            self.loc_hi.unwrap_or(base.loc_hi),
        )?;
        Ok(Some(space))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub input: Option<PathBuf>,
    /// `LO:HI:K` for one-dimensional designs.
    pub grid: Option<String>,
    /// Explicit testing points; takes any dimension.
    pub grid_points: Option<Vec<Vec<f64>>>,
    pub seed: u64,
    pub estimator: EstimatorConfig,
    pub bounds: BoundsConfig,
}

impl FitConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.input.is_none() {
            return Err(invalid("fit needs an input dataset"));
        }
        if self.grid.is_some() && self.grid_points.is_some() {
            return Err(invalid("give either grid or grid_points, not both"));
        }
        if let Some(g) = &self.grid {
            parse_grid(g).map_err(invalid)?;
        }
        if let Some(p) = &self.grid_points {
            if p.is_empty() || p.iter().any(|x| x.is_empty() || x.iter().any(|v| !v.is_finite())) {
                return Err(invalid("grid_points must be non-empty finite points"));
            }
        }
        self.estimator.validate()
    }

    /// Testing points; defaults to 20 points across the observed design.
    pub fn resolve_grid(&self, data: &Dataset) -> CliResult<Vec<Vec<f64>>> {
        let grid = if let Some(p) = &self.grid_points {
            p.clone()
        } else if let Some(g) = &self.grid {
            parse_grid(g).map_err(invalid)?
        } else {
            if data.dim() != 1 {
                return Err(invalid("multivariate designs need explicit grid_points"));
            }
            let (lo, hi) = (0..data.len())
                .map(|i| data.x(i)[0])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            linear_grid(lo, hi, 20)
        };
        if let Some(bad) = grid.iter().find(|x| x.len() != data.dim()) {
            return Err(invalid(format!(
                "testing point {bad:?} has dimension {}, data has {}",
                bad.len(),
                data.dim()
            )));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityRunConfig {
    pub input: Option<PathBuf>,
    pub fit: Option<PathBuf>,
    pub x0: Vec<Vec<f64>>,
    pub h1: Option<f64>,
    pub h2: Option<f64>,
    pub n_y: usize,
    pub n_u: usize,
}

impl Default for DensityRunConfig {
    fn default() -> Self {
        let sizes = symmix::density::GridSizes::default();
        DensityRunConfig {
            input: None,
            fit: None,
            x0: vec![],
            h1: None,
            h2: None,
            n_y: sizes.n_y,
            n_u: sizes.n_u,
        }
    }
}

impl DensityRunConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.input.is_none() || self.fit.is_none() {
            return Err(invalid("density needs both the dataset and a fit result"));
        }
        if self.x0.is_empty() {
            return Err(invalid("density needs at least one x0"));
        }
        for h in [self.h1, self.h2].into_iter().flatten() {
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid(format!("bandwidths must be positive, got {h}")));
            }
        }
        if self.n_y < 2 || self.n_u < 2 {
            return Err(invalid("n_y and n_u must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub scenarios: Vec<String>,
    pub n: Vec<usize>,
    pub m: usize,
    pub k: usize,
    pub seed: u64,
    pub estimator: EstimatorConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            scenarios: vec!["G".into(), "T".into(), "L".into()],
            n: vec![400, 800, 1200],
            m: 20,
            k: 20,
            seed: 0,
            estimator: EstimatorConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.scenarios.is_empty() || self.n.is_empty() {
            return Err(invalid("study needs at least one scenario and one sample size"));
        }
        for s in &self.scenarios {
            symmix::Scenario::by_name(s)?;
        }
        if self.n.iter().any(|&n| n < 10) {
            return Err(invalid("sample sizes must be at least 10"));
        }
        if self.m == 0 || self.k == 0 {
            return Err(invalid("M and K must be positive"));
        }
        self.estimator.validate()
    }
}

/// `all` or a comma-separated list of scenario names.
pub fn parse_scenarios(s: &str) -> Vec<String> {
    if s.eq_ignore_ascii_case("all") {
        return vec!["G".into(), "T".into(), "L".into()];
    }
    s.split(',').map(|t| t.trim().to_string()).collect()
}
