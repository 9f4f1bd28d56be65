//! Pointwise estimation of `(pi(x), a(x), b(x))` over a grid of testing
//! points.
//!
//! Initialization: a pilot Nadaraya-Watson curve splits the sample into
//! points above (group 1, location `a`) and on or below (group 2,
//! location `b`) the curve; group-wise smoothing then gives starting
//! locations and local bandwidths at each testing point. Estimation
//! minimizes the Monte-Carlo contrast from that start.

use serde::{Deserialize, Serialize};

use crate::contrast::{ContrastConfig, ContrastEvaluator};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kernels::{scaled_kernel_at, Bandwidth, KernelFamily, KernelFn, WeightDensity};
use crate::model::{Dataset, ParamSpace, ThetaPoint};
use crate::optim::{nelder_mead, Bounds, NelderMeadOptions};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    /// Above the pilot curve; location `a`.
    First,
    /// On or below the pilot curve; location `b`.
    Second,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance from `target` to its `k`-th nearest row of `data` (counting a
/// coincident row), or the nearest positive distance when that is zero.
fn nn_bandwidth(data: &Dataset, target: &[f64], k: usize) -> Result<f64> {
    let mut dists: Vec<f64> = (0..data.len()).map(|j| distance(data.x(j), target)).collect();
    let k = k.clamp(1, dists.len());
    let (_, kth, _) = dists.select_nth_unstable_by(k - 1, f64::total_cmp);
    let kth = *kth;
    if kth > 0.0 {
        return Ok(kth);
    }
    dists
        .iter()
        .copied()
        .filter(|&d| d > 0.0)
        .min_by(f64::total_cmp)
        .ok_or(Error::DegenerateDesign)
}

fn neighbor_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64).ceil() as usize).clamp(1, n)
}

fn nadaraya_watson(data: &Dataset, target: &[f64], h: f64, kernel: &KernelFn) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..data.len() {
        let w = scaled_kernel_at(kernel, h, data.x(j), target);
        num += w * data.y(j);
        den += w;
    }
    (den > 0.0).then(|| num / den)
}

fn check_frac(frac: f64) -> Result<()> {
    if frac > 0.0 && frac <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "neighbor fraction must lie in (0, 1], got {frac}"
        )))
    }
}

/// Nadaraya-Watson fit at each design point, bandwidth equal to the
/// distance to the `ceil(frac n)`-th nearest design point.
pub fn pilot_regression(
    data: &Dataset,
    frac: f64,
    kernel: KernelFamily,
    exec: Exec,
) -> Result<Vec<f64>> {
    if data.len() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: data.len(),
        });
    }
    check_frac(frac)?;
    let k = neighbor_count(frac, data.len());
    let kernel = KernelFn::new(kernel, data.dim());
    exec.map(data.len(), |i| {
        let h = nn_bandwidth(data, data.x(i), k)?;
        nadaraya_watson(data, data.x(i), h, &kernel).ok_or(Error::DegenerateDesign)
    })
    .into_iter()
    .collect()
}

/// Group 1 iff `y_i > pilot_i`.
pub fn classify(data: &Dataset, pilot: &[f64]) -> Result<Vec<Group>> {
    if pilot.len() != data.len() {
        return Err(Error::LengthMismatch(pilot.len(), data.len()));
    }
    let labels: Vec<Group> = (0..data.len())
        .map(|i| {
            if data.y(i) > pilot[i] {
                Group::First
            } else {
                Group::Second
            }
        })
        .collect();
    if !labels.contains(&Group::First) {
        return Err(Error::EmptyGroup(1));
    }
    if !labels.contains(&Group::Second) {
        return Err(Error::EmptyGroup(2));
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSmooth {
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

impl GroupSmooth {
    pub fn h_local(&self) -> Vec<f64> {
        self.h1.iter().zip(&self.h2).map(|(a, b)| a.min(*b)).collect()
    }
}

/// Within-group Nadaraya-Watson curves at the testing points.
pub fn group_smooth(
    data: &Dataset,
    labels: &[Group],
    grid: &[Vec<f64>],
    frac: f64,
    kernel: KernelFamily,
    exec: Exec,
) -> Result<GroupSmooth> {
    if labels.len() != data.len() {
        return Err(Error::LengthMismatch(labels.len(), data.len()));
    }
    check_frac(frac)?;
    let pick = |g: Group| -> Result<Dataset> {
        let keep: Vec<bool> = labels.iter().map(|&l| l == g).collect();
        data.filter(&keep).ok_or(Error::EmptyGroup(match g {
            Group::First => 1,
            Group::Second => 2,
        }))
    };
    let first = pick(Group::First)?;
    let second = pick(Group::Second)?;
    let kernel = KernelFn::new(kernel, data.dim());
    let smooth = |group: &Dataset, x: &[f64]| -> Result<(f64, f64)> {
        if x.len() != group.dim() {
            return Err(Error::DimensionMismatch {
                expected: group.dim(),
                got: x.len(),
            });
        }
        let h = nn_bandwidth(group, x, neighbor_count(frac, group.len()))?;
        let m = nadaraya_watson(group, x, h, &kernel).ok_or(Error::DegenerateDesign)?;
        Ok((m, h))
    };
    let rows: Vec<Result<(f64, f64, f64, f64)>> = exec.map_slice(grid, |x| {
        let (a, h1) = smooth(&first, x)?;
        let (b, h2) = smooth(&second, x)?;
        Ok((a, b, h1, h2))
    });
    let mut out = GroupSmooth {
        a_bar: Vec::with_capacity(grid.len()),
        b_bar: Vec::with_capacity(grid.len()),
        h1: Vec::with_capacity(grid.len()),
        h2: Vec::with_capacity(grid.len()),
    };
    for row in rows {
        let (a, b, h1, h2) = row?;
        out.a_bar.push(a);
        out.b_bar.push(b);
        out.h1.push(h1);
        out.h2.push(h2);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitState {
    pub pilot_curve: Vec<f64>,
    pub labels: Vec<Group>,
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub h_local: Vec<f64>,
    pub pi_bar: f64,
}

pub fn initialize(data: &Dataset, grid: &[Vec<f64>], opts: &FitOptions) -> Result<InitState> {
    // Single pass; the grid-level work is cheap next to the contrast fits.
    let exec = Exec::Sequential;
    let pilot_curve = pilot_regression(data, opts.frac, opts.kernel, exec)?;
    let labels = classify(data, &pilot_curve)?;
    let gs = group_smooth(data, &labels, grid, opts.frac, opts.kernel, exec)?;
    let h_local = gs.h_local();
    Ok(InitState {
        pilot_curve,
        labels,
        a_bar: gs.a_bar,
        b_bar: gs.b_bar,
        h1: gs.h1,
        h2: gs.h2,
        h_local,
        pi_bar: opts.pi_bar,
    })
}

/// Contrast bandwidth at each testing point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum BandwidthRule {
    /// `min(h1, h2)` from the group smoothing.
    #[default]
    Local,
    Fixed { h: f64 },
    /// `c n^{-1/(2 alpha + d)}`.
    Rate { c: f64, alpha: f64 },
}

impl BandwidthRule {
    pub fn resolve(&self, h_local: f64, n: usize, d: usize) -> Result<Bandwidth> {
        match *self {
            BandwidthRule::Local => Bandwidth::new(h_local),
            BandwidthRule::Fixed { h } => Bandwidth::new(h),
            BandwidthRule::Rate { c, alpha } => {
                if !(alpha > 0.0) {
                    return Err(Error::InvalidParameter("rate exponent alpha must be positive".into()));
                }
                Bandwidth::new(c * (n as f64).powf(-1.0 / (2.0 * alpha + d as f64)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Nearest-neighbor fraction for the initialization bandwidths.
    pub frac: f64,
    pub pi_bar: f64,
    pub bandwidth: BandwidthRule,
    /// Monte-Carlo nodes; `None` uses the sample size.
    pub n_mc: Option<usize>,
    pub seed: u64,
    pub kernel: KernelFamily,
    pub weight: WeightDensity,
    pub strict_theta: bool,
    /// Overrides the response-range box when set.
    pub space: Option<ParamSpace>,
    #[serde(skip)]
    pub optimizer: NelderMeadOptions,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            frac: 0.1,
            pi_bar: 0.4,
            bandwidth: BandwidthRule::Local,
            n_mc: None,
            seed: 0,
            kernel: KernelFamily::Gaussian,
            weight: WeightDensity::NormalUniform,
            strict_theta: false,
            space: None,
            optimizer: NelderMeadOptions::default(),
            exec: Exec::Parallel,
        }
    }
}

impl FitOptions {
    pub fn param_space(&self, data: &Dataset) -> Result<ParamSpace> {
        match self.space {
            Some(s) => Ok(s),
            None => ParamSpace::for_responses(data, self.strict_theta),
        }
    }

    pub fn contrast_config(&self, data: &Dataset, x0: &[f64], h: Bandwidth) -> ContrastConfig {
        ContrastConfig {
            x0: x0.to_vec(),
            h,
            kernel: KernelFn::new(self.kernel, data.dim()),
            weight: self.weight.clone(),
            n_mc: self.n_mc.unwrap_or(data.len()),
            seed: point_seed(self.seed, x0),
        }
    }
}

/// Evaluator seed for testing point `x0`; depends on its coordinates, not
/// on its position in the grid.
pub fn point_seed(seed: u64, x0: &[f64]) -> u64 {
    x0.iter().fold(seed, |s, v| derive_seed(s, v.to_bits()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointFlags {
    pub label_switch_suspect: bool,
    pub merge_suspect: bool,
    pub boundary_hit: bool,
}

impl PointFlags {
    pub fn assess(theta: &ThetaPoint, init: &ThetaPoint, space: &ParamSpace) -> Self {
        let tol = 1e-3;
        let v = theta.to_array();
        let (lo, hi) = (space.lower(), space.upper());
        let boundary_hit = (0..3).any(|i| v[i] - lo[i] < tol || hi[i] - v[i] < tol);
        let merge_suspect = theta.pi < 0.07
            || theta.pi > 0.93
            || (theta.a - theta.b).abs() < 0.1 * (space.loc_hi - space.loc_lo);
        let label_switch_suspect =
            (init.a > init.b && theta.a < theta.b) || (init.a < init.b && theta.a > theta.b);
        PointFlags {
            label_switch_suspect,
            merge_suspect,
            boundary_hit,
        }
    }

    /// `|`-joined names of the raised flags.
    pub fn label(&self) -> String {
        let mut names = Vec::new();
        if self.label_switch_suspect {
            names.push("label_switch_suspect");
        }
        if self.merge_suspect {
            names.push("merge_suspect");
        }
        if self.boundary_hit {
            names.push("boundary_hit");
        }
        names.join("|")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFit {
    pub x: Vec<f64>,
    pub init: ThetaPoint,
    pub h: f64,
    pub theta: ThetaPoint,
    pub contrast: f64,
    pub init_contrast: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub flags: PointFlags,
}

/// Kernel-weighted response spread around `x0`.
fn local_spread(ev: &ContrastEvaluator, data: &Dataset) -> f64 {
    let w = ev.kernel_weights();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let mean = w.iter().zip(data.responses()).map(|(w, y)| w * y).sum::<f64>() / total;
    let var = w
        .iter()
        .zip(data.responses())
        .map(|(w, y)| w * (y - mean) * (y - mean))
        .sum::<f64>()
        / total;
    var.sqrt()
}

/// Candidates whose transfer modulus at some node falls below this floor are
/// rejected by the optimizer. Near `pi = 1/2` the sampled contrast is
/// unbounded below.
pub const TRANSFER_FLOOR: f64 = 0.05;

/// Minimize the Monte-Carlo contrast at one testing point.
pub fn fit_point(
    data: &Dataset,
    init: ThetaPoint,
    space: &ParamSpace,
    cfg: ContrastConfig,
    optimizer: &NelderMeadOptions,
    exec: Exec,
) -> Result<PointFit> {
    if !space.contains(&init) {
        return Err(Error::InvalidParameter(format!(
            "initial point {init:?} lies outside the parameter box"
        )));
    }
    let x0 = cfg.x0.clone();
    let h = cfg.h.get();
    let ev = ContrastEvaluator::new(cfg, data, exec)?;
    let spread = local_spread(&ev, data);
    let loc_step = if spread > 0.0 {
        0.5 * spread
    } else {
        0.1 * (space.loc_hi - space.loc_lo)
    };
    let bounds = Bounds::new(space.lower().to_vec(), space.upper().to_vec())?;
    let objective = |v: &[f64]| {
        let t = ThetaPoint::from_array([v[0], v[1], v[2]]);
        if ev.min_transfer_modulus(&t) < TRANSFER_FLOOR {
            return Ok(f64::INFINITY);
        }
        ev.mc_contrast(&t)
    };
    let init_contrast = ev.mc_contrast(&init)?;
    // Mirrored starts get mirrored simplices.
    let pi_step = if init.pi <= 0.5 { 0.1 } else { -0.1 };
    let min = nelder_mead(
        objective,
        &init.to_array(),
        &[pi_step, loc_step, loc_step],
        &bounds,
        optimizer,
    )?;
    if !min.value.is_finite() {
        return Err(Error::NonFiniteContrast(format!("{:?}", min.x)));
    }
    let theta = ThetaPoint::from_array([min.x[0], min.x[1], min.x[2]]);
    let flags = PointFlags::assess(&theta, &init, space);
    Ok(PointFit {
        x: x0,
        init,
        h,
        theta,
        contrast: min.value,
        init_contrast,
        iterations: min.iterations,
        evaluations: min.evaluations,
        converged: min.converged,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub x: Vec<f64>,
    pub h1: f64,
    pub h2: f64,
    pub h_local: f64,
    pub fit: Option<PointFit>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub space: ParamSpace,
    pub n: usize,
    pub n_mc: usize,
    pub points: Vec<PointOutcome>,
}

impl FitResult {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.fit.is_none()).count()
    }

    pub fn point_at(&self, x0: &[f64], tol: f64) -> Option<&PointOutcome> {
        self.points
            .iter()
            .find(|p| p.x.len() == x0.len() && p.x.iter().zip(x0).all(|(a, b)| (a - b).abs() <= tol))
    }
}

/// Initialize once, then fit every testing point independently.
pub fn fit_curve(data: &Dataset, grid: &[Vec<f64>], opts: &FitOptions) -> Result<FitResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty testing grid".into()));
    }
    let space = opts.param_space(data)?;
    let init = initialize(data, grid, opts)?;
    let inner = if opts.exec.is_parallel() && grid.len() > 1 {
        Exec::Sequential
    } else {
        opts.exec
    };
    let points = opts.exec.map(grid.len(), |k| {
        let x = &grid[k];
        let start = space.clamp(&ThetaPoint {
            pi: init.pi_bar,
            a: init.a_bar[k],
            b: init.b_bar[k],
        });
        let result = opts
            .bandwidth
            .resolve(init.h_local[k], data.len(), data.dim())
            .and_then(|h| {
                let cfg = opts.contrast_config(data, x, h);
                fit_point(data, start, &space, cfg, &opts.optimizer, inner)
            });
        let (fit, failure) = match result {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        PointOutcome {
            x: x.clone(),
            h1: init.h1[k],
            h2: init.h2[k],
            h_local: init.h_local[k],
            fit,
            failure,
        }
    });
    Ok(FitResult {
        space,
        n: data.len(),
        n_mc: opts.n_mc.unwrap_or(data.len()),
        points,
    })
}

/// `K` equispaced points `lo, ..., hi`.
pub fn linear_grid(lo: f64, hi: f64, k: usize) -> Vec<Vec<f64>> {
    match k {
        0 => vec![],
        1 => vec![vec![lo]],
        _ => (0..k)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (k - 1) as f64])
            .collect(),
    }
}

/// Testing sequence `x_k = k / K`, `k = 1..=K`.
pub fn unit_grid(k: usize) -> Vec<Vec<f64>> {
    (1..=k).map(|i| vec![i as f64 / k as f64]).collect()
}
