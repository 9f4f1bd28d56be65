//! Data-generating processes, error metrics, and the replication study.
//!
//! All three shipped scenarios share the proportion curve
//! `pi(x) = (sin(3 pi x) - 1) / 15 + 0.4` and draw the design uniformly on
//! `[0, 1]`:
//!
//! | name | `a(x)`            | `b(x)`               | errors                     |
//! |------|-------------------|----------------------|----------------------------|
//! | G    | `4 - 2 sin(2πx)`  | `1.5 cos(3πx) - 3`   | `N(0, (0.9 e^x)^2)`        |
//! | T    | `3 - 2 sin(2πx)`  | `1.5 cos(3πx) - 2`   | Student, `df = 8 - 5x`     |
//! | L    | `5 - 3 sin(2πx)`  | `2 cos(3πx) - 4`     | Laplace, scale `x + 1`     |

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::distr::Open01;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_curve, unit_grid, FitOptions, FitResult};
use crate::exec::Exec;
use crate::model::{Dataset, Observation, ThetaPoint};
use crate::seed::derive_seed;

pub type CurveFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Symmetric error family with a design-dependent parameter.
#[derive(Clone)]
pub enum Noise {
    /// Standard deviation `sigma(x)`.
    Gaussian(CurveFn),
    /// Degrees of freedom `df(x)`, possibly non-integer.
    Student(CurveFn),
    /// Scale `nu(x)` of the density `exp(-|e| / nu) / (2 nu)`.
    Laplace(CurveFn),
}

impl Noise {
    pub fn sample<R: Rng>(&self, x: f64, rng: &mut R) -> f64 {
        match self {
            Noise::Gaussian(sigma) => {
                let z: f64 = rng.sample(StandardNormal);
                sigma(x) * z
            }
            Noise::Student(df) => {
                let df = df(x);
                let z: f64 = rng.sample(StandardNormal);
                // Chi-square(df) as Gamma(df / 2, scale 2).
                let chi2 = Gamma::new(0.5 * df, 2.0)
                    .expect("positive degrees of freedom")
                    .sample(rng);
                z / (chi2 / df).sqrt()
            }
            Noise::Laplace(scale) => {
                let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
                -scale(x) * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Noise::Gaussian(_) => "gaussian",
            Noise::Student(_) => "student",
            Noise::Laplace(_) => "laplace",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    G,
    T,
    L,
    Custom,
}

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub pi_fn: CurveFn,
    pub a_fn: CurveFn,
    pub b_fn: CurveFn,
    pub noise: Noise,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("noise", &self.noise.kind())
            .finish()
    }
}

fn shared_pi(x: f64) -> f64 {
    ((3.0 * PI * x).sin() - 1.0) / 15.0 + 0.4
}

impl Scenario {
    /// Gaussian errors with scale `0.9 e^x`.
    pub fn gaussian() -> Self {
        Scenario {
            name: "G".into(),
            kind: ScenarioKind::G,
            pi_fn: Arc::new(shared_pi),
            a_fn: Arc::new(|x| 4.0 - 2.0 * (2.0 * PI * x).sin()),
            b_fn: Arc::new(|x| 1.5 * (3.0 * PI * x).cos() - 3.0),
            noise: Noise::Gaussian(Arc::new(|x: f64| 0.9 * x.exp())),
        }
    }

    /// Student errors with `8 - 5x` degrees of freedom.
    pub fn student() -> Self {
        Scenario {
            name: "T".into(),
            kind: ScenarioKind::T,
            pi_fn: Arc::new(shared_pi),
            a_fn: Arc::new(|x| 3.0 - 2.0 * (2.0 * PI * x).sin()),
            b_fn: Arc::new(|x| 1.5 * (3.0 * PI * x).cos() - 2.0),
            noise: Noise::Student(Arc::new(|x| -5.0 * x + 8.0)),
        }
    }

    /// Laplace errors with scale `x + 1`.
    pub fn laplace() -> Self {
        Scenario {
            name: "L".into(),
            kind: ScenarioKind::L,
            pi_fn: Arc::new(shared_pi),
            a_fn: Arc::new(|x| 5.0 - 3.0 * (2.0 * PI * x).sin()),
            b_fn: Arc::new(|x| 2.0 * (3.0 * PI * x).cos() - 4.0),
            noise: Noise::Laplace(Arc::new(|x| x + 1.0)),
        }
    }

    /// User-defined process. Proportions are checked to lie in `[0, 1]` and
    /// noise parameters to be nonnegative on an evaluation grid; boundary
    /// values are allowed so degenerate processes can be expressed.
    pub fn custom(name: &str, pi_fn: CurveFn, a_fn: CurveFn, b_fn: CurveFn, noise: Noise) -> Result<Self> {
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            let p = pi_fn(x);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("pi({x}) = {p} outside [0, 1]")));
            }
            let param = match &noise {
                Noise::Gaussian(f) | Noise::Laplace(f) => f(x),
                Noise::Student(f) => f(x),
            };
            let ok = match &noise {
                Noise::Student(_) => param > 0.0,
                _ => param >= 0.0,
            };
            if !ok || !param.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "noise parameter {param} invalid at x = {x}"
                )));
            }
        }
        Ok(Scenario {
            name: name.into(),
            kind: ScenarioKind::Custom,
            pi_fn,
            a_fn,
            b_fn,
            noise,
        })
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "G" | "g" => Ok(Self::gaussian()),
            "T" | "t" => Ok(Self::student()),
            "L" | "l" => Ok(Self::laplace()),
            other => Err(Error::InvalidParameter(format!("unknown scenario '{other}'"))),
        }
    }

    pub fn all() -> Vec<Self> {
        vec![Self::gaussian(), Self::student(), Self::laplace()]
    }

    pub fn description(&self) -> &'static str {
        match self.noise {
            Noise::Gaussian(_) => "Gaussian errors",
            Noise::Student(_) => "Student errors",
            Noise::Laplace(_) => "Laplace errors",
        }
    }
}

/// `(pi(x), a(x), b(x))` of the scenario.
pub fn true_theta(sc: &Scenario, x: f64) -> ThetaPoint {
    ThetaPoint {
        pi: (sc.pi_fn)(x),
        a: (sc.a_fn)(x),
        b: (sc.b_fn)(x),
    }
}

/// `n` draws with uniform design on `[0, 1]`.
pub fn sample_dataset(sc: &Scenario, n: usize, seed: u64) -> Result<Dataset> {
    sample_labeled(sc, n, seed).map(|(data, _)| data)
}

/// Like [`sample_dataset`], also returning `W_i` (true for the `a` component).
pub fn sample_labeled(sc: &Scenario, n: usize, seed: u64) -> Result<(Dataset, Vec<bool>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(n);
    let obs = (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let first = rng.random::<f64>() < (sc.pi_fn)(x);
            let loc = if first { (sc.a_fn)(x) } else { (sc.b_fn)(x) };
            let eps = sc.noise.sample(x, &mut rng);
            labels.push(first);
            Observation { x: vec![x], y: loc + eps }
        })
        .collect();
    Ok((Dataset::new(obs)?, labels))
}

/// `(1/K sum_k (est_k - truth_k)^2)^{1/2}` for one replication.
pub fn rase_replication(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch(estimates.len(), truth.len()));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidParameter("empty testing grid".into()));
    }
    let mse = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum::<f64>()
        / estimates.len() as f64;
    Ok(mse.sqrt())
}

/// Mean over replications of the per-replication RASE.
pub fn rase(estimates: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch(estimates.len(), truth.len()));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidParameter("no replications".into()));
    }
    let mut total = 0.0;
    for (e, t) in estimates.iter().zip(truth) {
        total += rase_replication(e, t)?;
    }
    Ok(total / estimates.len() as f64)
}

/// Average over grid points of the across-replication sample variance of
/// the squared deviations; `sq_dev[z][k]` is replication `z` at point `k`.
pub fn squared_dev_variance(sq_dev: &[Vec<f64>]) -> Result<f64> {
    let m = sq_dev.len();
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    let k = sq_dev[0].len();
    if k == 0 {
        return Err(Error::InvalidParameter("empty testing grid".into()));
    }
    if let Some(bad) = sq_dev.iter().find(|r| r.len() != k) {
        return Err(Error::LengthMismatch(bad.len(), k));
    }
    let mut total = 0.0;
    for j in 0..k {
        let nu = sq_dev.iter().map(|r| r[j]).sum::<f64>() / m as f64;
        let var = sq_dev.iter().map(|r| (r[j] - nu) * (r[j] - nu)).sum::<f64>() / (m - 1) as f64;
        total += var;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub rase: f64,
    /// `None` with fewer than two usable replications.
    pub sigma2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub scenario: String,
    pub n: usize,
    pub replications: usize,
    pub used: usize,
    pub failed: usize,
    pub seeds: Vec<u64>,
    pub pi: Option<Metric>,
    pub a: Option<Metric>,
    pub b: Option<Metric>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub master_seed: u64,
    pub m: usize,
    pub k: usize,
    pub blocks: Vec<BlockReport>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// One replication's estimates at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub x: Vec<f64>,
    /// `None` when the whole replication failed.
    pub estimates: Option<Vec<ThetaPoint>>,
    pub truth: Vec<ThetaPoint>,
    pub flags: Vec<String>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawBlock {
    pub scenario: String,
    pub n: usize,
    pub records: Vec<ReplicationRecord>,
}

pub const RAW_HEADER: &str = "replication,grid_index,x,pi_hat,a_hat,b_hat,pi_true,a_true,b_true,flags";

impl RawBlock {
    pub fn file_name(&self) -> String {
        format!("raw_{}_n{}.csv", self.scenario, self.n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RAW_HEADER);
        out.push('\n');
        for rec in &self.records {
            for (k, x) in rec.x.iter().enumerate() {
                let t = rec.truth[k];
                let (hat, flags) = match &rec.estimates {
                    Some(est) => {
                        let e = est[k];
                        (format!("{},{},{}", e.pi, e.a, e.b), rec.flags[k].clone())
                    }
                    None => (",,".to_string(), "failed".to_string()),
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    rec.replication, k, x, hat, t.pi, t.a, t.b, flags
                );
            }
        }
        out
    }

    /// Metrics over the successful replications, in replication order.
    pub fn block_report(&self, replications: usize) -> BlockReport {
        let used: Vec<&ReplicationRecord> = self.records.iter().filter(|r| r.estimates.is_some()).collect();
        let metric = |get: fn(&ThetaPoint) -> f64| -> Option<Metric> {
            if used.is_empty() {
                return None;
            }
            let est: Vec<Vec<f64>> = used
                .iter()
                .map(|r| r.estimates.as_ref().unwrap().iter().map(get).collect())
                .collect();
            let tru: Vec<Vec<f64>> = used.iter().map(|r| r.truth.iter().map(get).collect()).collect();
            let sq: Vec<Vec<f64>> = est
                .iter()
                .zip(&tru)
                .map(|(e, t)| e.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).collect())
                .collect();
            Some(Metric {
                rase: rase(&est, &tru).ok()?,
                sigma2: squared_dev_variance(&sq).ok(),
            })
        };
        BlockReport {
            scenario: self.scenario.clone(),
            n: self.n,
            replications,
            used: used.len(),
            failed: self.records.len() - used.len(),
            seeds: self.records.iter().map(|r| r.seed).collect(),
            pi: metric(|t| t.pi),
            a: metric(|t| t.a),
            b: metric(|t| t.b),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub fit: FitOptions,
    pub exec: Exec,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            fit: FitOptions::default(),
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Study {
    pub report: StudyReport,
    pub raw: Vec<RawBlock>,
}

fn scenario_stream(sc: &Scenario) -> u64 {
    sc.name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of replication `z` for `(scenario, n)`.
pub fn replication_seed(master: u64, sc: &Scenario, n: usize, z: usize) -> u64 {
    derive_seed(derive_seed(derive_seed(master, scenario_stream(sc)), n as u64), z as u64)
}

fn run_replication(sc: &Scenario, n: usize, grid: &[Vec<f64>], seed: u64, replication: usize, opts: &FitOptions) -> ReplicationRecord {
    let truth: Vec<ThetaPoint> = grid.iter().map(|x| true_theta(sc, x[0])).collect();
    let xs: Vec<f64> = grid.iter().map(|x| x[0]).collect();
    let mut fit_opts = opts.clone();
    fit_opts.seed = derive_seed(seed, 1);
    let outcome: Result<FitResult> =
        sample_dataset(sc, n, derive_seed(seed, 0)).and_then(|data| fit_curve(&data, grid, &fit_opts));
    let mut record = ReplicationRecord {
        replication,
        seed,
        x: xs,
        estimates: None,
        truth,
        flags: vec![],
        failure: None,
    };
    match outcome {
        Ok(fit) => {
            if let Some(p) = fit.points.iter().find(|p| p.fit.is_none()) {
                record.failure = p.failure.clone();
            } else {
                let fits: Vec<_> = fit.points.iter().map(|p| p.fit.as_ref().unwrap()).collect();
                record.estimates = Some(fits.iter().map(|f| f.theta).collect());
                record.flags = fits.iter().map(|f| f.flags.label()).collect();
            }
        }
        Err(e) => record.failure = Some(e.to_string()),
    }
    record
}

/// Replicate sample -> fit -> metrics for every `(scenario, n)` pair.
pub fn run_study(
    scenarios: &[Scenario],
    n_list: &[usize],
    m: usize,
    k: usize,
    master_seed: u64,
    options: &StudyOptions,
) -> Result<Study> {
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one replication".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one testing point".into()));
    }
    let start = Instant::now();
    let grid = unit_grid(k);
    let mut fit = options.fit.clone();
    if options.exec.is_parallel() {
        fit.exec = Exec::Sequential;
    }
    let mut raw = Vec::new();
    let mut blocks = Vec::new();
    for sc in scenarios {
        for &n in n_list {
            let records = options.exec.map(m, |z| {
                let seed = replication_seed(master_seed, sc, n, z);
                run_replication(sc, n, &grid, seed, z, &fit)
            });
            let block = RawBlock {
                scenario: sc.name.clone(),
                n,
                records,
            };
            blocks.push(block.block_report(m));
            raw.push(block);
        }
    }
    Ok(Study {
        report: StudyReport {
            master_seed,
            m,
            k,
            blocks,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
        raw,
    })
}

impl StudyReport {
    /// Plain-text table, one section per scenario, one row per sample size.
    pub fn to_table(&self) -> String {
        let fmt_metric = |m: &Option<Metric>| match m {
            Some(Metric { rase, sigma2: Some(s) }) => format!("{rase:.3} ({s:.3})"),
            Some(Metric { rase, sigma2: None }) => format!("{rase:.3} (-)"),
            None => "-".to_string(),
        };
        let mut out = String::new();
        let mut last: Option<&str> = None;
        for b in &self.blocks {
            if last != Some(b.scenario.as_str()) {
                if last.is_some() {
                    out.push('\n');
                }
                let desc = Scenario::by_name(&b.scenario).map(|s| s.description()).unwrap_or("custom");
                let _ = writeln!(out, "Scenario {} ({desc}), M = {}, K = {}", b.scenario, self.m, self.k);
                let _ = writeln!(
                    out,
                    "{:<14}{:<20}{:<20}{:<20}failed",
                    "Sample size", "RASE_pi (s2_pi)", "RASE_a (s2_a)", "RASE_b (s2_b)"
                );
                last = Some(b.scenario.as_str());
            }
            let _ = writeln!(
                out,
                "{:<14}{:<20}{:<20}{:<20}{}",
                format!("n = {}", b.n),
                fmt_metric(&b.pi),
                fmt_metric(&b.a),
                fmt_metric(&b.b),
                b.failed
            );
        }
        out
    }
}
