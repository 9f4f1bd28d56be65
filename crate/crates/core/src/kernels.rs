//! Smoothing kernels and the frequency-weight density.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::distr::Open01;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Gaussian,
    Epanechnikov,
    Uniform,
}

impl KernelFamily {
    /// Univariate kernel value.
    pub fn eval(self, v: f64) -> f64 {
        match self {
            KernelFamily::Gaussian => INV_SQRT_2PI * (-0.5 * v * v).exp(),
            KernelFamily::Epanechnikov => {
                if v.abs() <= 1.0 {
                    0.75 * (1.0 - v * v)
                } else {
                    0.0
                }
            }
            KernelFamily::Uniform => {
                if v.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    pub fn peak(self) -> f64 {
        self.eval(0.0)
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            "uniform" => Ok(KernelFamily::Uniform),
            other => Err(Error::InvalidParameter(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Product kernel over `d` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelFn {
    pub family: KernelFamily,
    pub d: usize,
}

impl KernelFn {
    pub fn new(family: KernelFamily, d: usize) -> Self {
        KernelFn { family, d }
    }

    pub fn gaussian(d: usize) -> Self {
        Self::new(KernelFamily::Gaussian, d)
    }

    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: v.len(),
            });
        }
        Ok(v.iter().map(|&c| self.family.eval(c)).product())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(Bandwidth(h))
        } else {
            Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `K_h(v) = h^{-d} K(v / h)`.
pub fn scaled_kernel(kernel: &KernelFn, h: Bandwidth, v: &[f64]) -> Result<f64> {
    if v.len() != kernel.d {
        return Err(Error::DimensionMismatch {
            expected: kernel.d,
            got: v.len(),
        });
    }
    let h = h.get();
    let value: f64 = v.iter().map(|&c| kernel.family.eval(c / h)).product();
    Ok(value / h.powi(kernel.d as i32))
}

/// `K_h(x - x0)` without allocating the difference vector.
pub(crate) fn scaled_kernel_at(kernel: &KernelFn, h: f64, x: &[f64], x0: &[f64]) -> f64 {
    let value: f64 = x
        .iter()
        .zip(x0)
        .map(|(&a, &b)| kernel.family.eval((a - b) / h))
        .product();
    value / h.powi(kernel.d as i32)
}

/// Density of the Monte-Carlo frequency nodes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDensity {
    /// `0.1 N(0, 1) + 0.9 U[-2, 2]`.
    #[default]
    NormalUniform,
    /// Piecewise-linear density through `(nodes[i], values[i])`, zero
    /// outside, normalized to unit mass.
    Grid { nodes: Vec<f64>, values: Vec<f64> },
}

const NORMAL_WEIGHT: f64 = 0.1;
const UNIFORM_HALF_WIDTH: f64 = 2.0;

fn std_normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

impl WeightDensity {
    pub fn grid(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::LengthMismatch(nodes.len(), values.len()));
        }
        if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "weight grid needs at least two strictly increasing nodes".into(),
            ));
        }
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "weight grid values must be finite and nonnegative".into(),
            ));
        }
        let mass = trapezoid_mass(&nodes, &values);
        if !(mass > 0.0) {
            return Err(Error::InvalidParameter("weight grid has zero mass".into()));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(WeightDensity::Grid { nodes, values })
    }

    pub fn pdf(&self, u: f64) -> f64 {
        weight_pdf(self, u)
    }

    pub fn cdf(&self, u: f64) -> f64 {
        match self {
            WeightDensity::NormalUniform => {
                let uni = ((u + UNIFORM_HALF_WIDTH) / (2.0 * UNIFORM_HALF_WIDTH)).clamp(0.0, 1.0);
                NORMAL_WEIGHT * std_normal_cdf(u) + (1.0 - NORMAL_WEIGHT) * uni
            }
            WeightDensity::Grid { nodes, values } => {
                if u <= nodes[0] {
                    return 0.0;
                }
                let mut acc = 0.0;
                for i in 1..nodes.len() {
                    let (x0, x1) = (nodes[i - 1], nodes[i]);
                    if u < x1 {
                        let slope = (values[i] - values[i - 1]) / (x1 - x0);
                        let dx = u - x0;
                        return acc + values[i - 1] * dx + 0.5 * slope * dx * dx;
                    }
                    acc += 0.5 * (values[i - 1] + values[i]) * (x1 - x0);
                }
                acc.min(1.0)
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            WeightDensity::NormalUniform => {
                let pick: f64 = rng.sample(Open01);
                let p: f64 = rng.sample(Open01);
                if pick < NORMAL_WEIGHT {
                    std_normal_quantile(p)
                } else {
                    -UNIFORM_HALF_WIDTH + 2.0 * UNIFORM_HALF_WIDTH * p
                }
            }
            WeightDensity::Grid { nodes, values } => {
                let p: f64 = rng.sample(Open01);
                let mut acc = 0.0;
                for i in 1..nodes.len() {
                    let (x0, x1) = (nodes[i - 1], nodes[i]);
                    let seg = 0.5 * (values[i - 1] + values[i]) * (x1 - x0);
                    if p <= acc + seg || i + 1 == nodes.len() {
                        // Solve v0 dx + slope dx^2 / 2 = p - acc on the segment.
                        let target = (p - acc).max(0.0);
                        let slope = (values[i] - values[i - 1]) / (x1 - x0);
                        let v0 = values[i - 1];
                        let dx = if slope.abs() < 1e-14 {
                            if v0 > 0.0 {
                                target / v0
                            } else {
                                0.0
                            }
                        } else {
                            let disc = (v0 * v0 + 2.0 * slope * target).max(0.0);
                            2.0 * target / (v0 + disc.sqrt())
                        };
                        return (x0 + dx).min(x1);
                    }
                    acc += seg;
                }
                nodes[nodes.len() - 1]
            }
        }
    }
}

fn trapezoid_mass(nodes: &[f64], values: &[f64]) -> f64 {
    nodes
        .windows(2)
        .zip(values.windows(2))
        .map(|(x, v)| 0.5 * (v[0] + v[1]) * (x[1] - x[0]))
        .sum()
}

pub fn weight_pdf(w: &WeightDensity, u: f64) -> f64 {
    match w {
        WeightDensity::NormalUniform => {
            let uni = if u.abs() <= UNIFORM_HALF_WIDTH {
                1.0 / (2.0 * UNIFORM_HALF_WIDTH)
            } else {
                0.0
            };
            NORMAL_WEIGHT * std_normal_pdf(u) + (1.0 - NORMAL_WEIGHT) * uni
        }
        WeightDensity::Grid { nodes, values } => {
            if u < nodes[0] || u > nodes[nodes.len() - 1] {
                return 0.0;
            }
            let i = nodes.partition_point(|&x| x <= u).clamp(1, nodes.len() - 1);
            let (x0, x1) = (nodes[i - 1], nodes[i]);
            values[i - 1] + (values[i] - values[i - 1]) * (u - x0) / (x1 - x0)
        }
    }
}

/// `n_draws` i.i.d. frequencies from `w`; one ChaCha stream per seed.
pub fn weight_sample(w: &WeightDensity, n_draws: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_draws).map(|_| w.draw(&mut rng)).collect()
}
