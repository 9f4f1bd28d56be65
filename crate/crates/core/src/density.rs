//! Plug-in Fourier-inversion estimate of the local error density.
//!
//! Dividing the kernel-smoothed empirical characteristic function of the
//! responses near `x0` by `M(theta_hat, u)` removes the two locations; a
//! Gaussian frequency taper `Q*(h1 u) = exp(-(h1 u)^2 / 2)` keeps the
//! quotient integrable. The inverse transform is taken by trapezoid
//! quadrature, then the negative part is cut and the rest renormalized.
//!
//! The default bandwidths are heuristics without a consistency theory.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kernels::{scaled_kernel_at, Bandwidth, KernelFamily, KernelFn};
use crate::model::{inverse_transfer, Dataset, ThetaPoint};

/// `Q*` vanishes below this level at the edge of the default window.
const TAPER_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub x0: Vec<f64>,
    /// Frequency taper scale.
    pub h1: Bandwidth,
    /// Design-space kernel scale.
    pub h2: Bandwidth,
    pub kernel: KernelFamily,
    pub y_grid: Vec<f64>,
    pub u_grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSizes {
    pub n_y: usize,
    pub n_u: usize,
}

impl Default for GridSizes {
    fn default() -> Self {
        GridSizes { n_y: 512, n_u: 4096 }
    }
}

fn symmetric_grid(half_width: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64)
        .collect()
}

fn default_u_max(h1: Bandwidth) -> f64 {
    40.0_f64.min((-2.0 * TAPER_FLOOR.ln()).sqrt()) / h1.get()
}

impl DensityConfig {
    /// Replace `h1`, rescaling the default `u` window to match.
    pub fn with_h1(mut self, h1: Bandwidth) -> Self {
        let n_u = self.u_grid.len();
        self.h1 = h1;
        self.u_grid = symmetric_grid(default_u_max(h1), n_u);
        self
    }

    /// Data-driven defaults.
    ///
    /// `h1 = 1.06 s m^{-1/5}` with `s` the response standard deviation and
    /// `m = sum kappa / max kappa` the effective local sample size. The `u` window is `[-U, U]` with
    /// `U = min(40, sqrt(2 ln 1e9)) / h1`; the `y` window is centered at
    /// zero with half-width half the response range plus three response
    /// standard deviations.
    pub fn auto(
        data: &Dataset,
        x0: &[f64],
        h2: Bandwidth,
        sizes: GridSizes,
    ) -> Result<Self> {
        if x0.len() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                got: x0.len(),
            });
        }
        let kernel = KernelFamily::Gaussian;
        let k = KernelFn::new(kernel, data.dim());
        let weights: Vec<f64> = (0..data.len())
            .map(|i| scaled_kernel_at(&k, h2.get(), data.x(i), x0))
            .collect();
        let total: f64 = weights.iter().sum();
        let peak = weights.iter().copied().fold(0.0, f64::max);
        if !(total > 0.0) {
            return Err(Error::VanishingDesignDensity(0.0));
        }
        let m_eff = total / peak;
        let spread = data.response_sd();
        let spread = if spread > 0.0 { spread } else { 1e-3 };
        let h1 = Bandwidth::new(1.06 * spread * m_eff.powf(-0.2))?;
        let u_max = default_u_max(h1);
        let (lo, hi) = data.response_range();
        let y_half = 0.5 * (hi - lo) + 3.0 * data.response_sd();
        let y_half = if y_half > 0.0 { y_half } else { 1.0 };
        Ok(DensityConfig {
            x0: x0.to_vec(),
            h1,
            h2,
            kernel,
            y_grid: symmetric_grid(y_half, sizes.n_y),
            u_grid: symmetric_grid(u_max, sizes.n_u),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDensity {
    pub y: Vec<f64>,
    pub density: Vec<f64>,
    /// Integral of the truncated estimate before rescaling.
    pub normalization: f64,
    /// Integral of the discarded negative part.
    pub trim_mass: f64,
    /// Largest imaginary part of the raw inverse, relative to its largest
    /// real part.
    pub imag_residual: f64,
}

fn design_kernel(cfg: &DensityConfig, d: usize) -> KernelFn {
    KernelFn::new(cfg.kernel, d)
}

/// `l_n(x0) = (1/n) sum_k K_{h2}(X_k - x0)`.
pub fn design_density(data: &Dataset, cfg: &DensityConfig) -> f64 {
    let k = design_kernel(cfg, data.dim());
    let h = cfg.h2.get();
    (0..data.len())
        .map(|i| scaled_kernel_at(&k, h, data.x(i), &cfg.x0))
        .sum::<f64>()
        / data.len() as f64
}

fn taper(h1: f64, u: f64) -> f64 {
    let v = h1 * u;
    (-0.5 * v * v).exp()
}

fn local_weights(data: &Dataset, cfg: &DensityConfig) -> Vec<(f64, f64)> {
    let k = design_kernel(cfg, data.dim());
    let h = cfg.h2.get();
    (0..data.len())
        .map(|i| (data.y(i), scaled_kernel_at(&k, h, data.x(i), &cfg.x0)))
        .filter(|(_, w)| *w != 0.0)
        .collect()
}

fn numerator_from(local: &[(f64, f64)], n: usize, theta_hat: &ThetaPoint, h1: f64, u: f64) -> Result<Complex64> {
    let inv = inverse_transfer(theta_hat, u)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for &(y, w) in local {
        let (s, c) = (u * y).sin_cos();
        acc += Complex64::new(c, s) * w;
    }
    Ok(acc * inv * (taper(h1, u) / n as f64))
}

/// `(1/n) sum_k Q*(h1 u) e^{iuY_k} / M(theta_hat, u) K_{h2}(X_k - x0)`.
pub fn fourier_numerator(data: &Dataset, theta_hat: &ThetaPoint, cfg: &DensityConfig, u: f64) -> Result<Complex64> {
    let local = local_weights(data, cfg);
    numerator_from(&local, data.len(), theta_hat, cfg.h1.get(), u)
}

fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { grid[i] - grid[i - 1] } else { 0.0 };
            let right = if i + 1 < n { grid[i + 1] - grid[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

fn validate_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(format!(
            "{name} must have at least two strictly increasing nodes"
        )));
    }
    Ok(())
}

/// Invert, truncate at zero, renormalize.
pub fn invert_and_normalize(data: &Dataset, theta_hat: &ThetaPoint, cfg: &DensityConfig, exec: Exec) -> Result<LocalDensity> {
    validate_grid("u grid", &cfg.u_grid)?;
    validate_grid("y grid", &cfg.y_grid)?;
    if cfg.x0.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: cfg.x0.len(),
        });
    }
    let ell = design_density(data, cfg);
    if !(ell > 1e-8) {
        return Err(Error::VanishingDesignDensity(ell));
    }
    let local = local_weights(data, cfg);
    let h1 = cfg.h1.get();
    let phi: Vec<Complex64> = exec
        .map_slice(&cfg.u_grid, |&u| numerator_from(&local, data.len(), theta_hat, h1, u))
        .into_iter()
        .collect::<Result<_>>()?;
    let edge = phi[0].norm().max(phi[phi.len() - 1].norm()) / ell;
    if !(edge < 1e-4) {
        return Err(Error::InversionWindowTooNarrow(edge));
    }

    let du = trapezoid_weights(&cfg.u_grid);
    let raw: Vec<Complex64> = exec.map_slice(&cfg.y_grid, |&y| {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((&u, p), &w) in cfg.u_grid.iter().zip(&phi).zip(&du) {
            let (s, c) = (u * y).sin_cos();
            acc += Complex64::new(c, -s) * p * w;
        }
        acc / (2.0 * PI * ell)
    });

    let max_re = raw.iter().map(|z| z.re).fold(0.0, f64::max);
    let max_im = raw.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let dy = trapezoid_weights(&cfg.y_grid);
    let positive: Vec<f64> = raw.iter().map(|z| z.re.max(0.0)).collect();
    let trim_mass: f64 = raw.iter().zip(&dy).map(|(z, w)| (-z.re).max(0.0) * w).sum();
    let normalization: f64 = positive.iter().zip(&dy).map(|(f, w)| f * w).sum();
    if !(normalization > 0.0) {
        return Err(Error::InvalidParameter(
            "estimated density has no positive mass on the y grid".into(),
        ));
    }
    Ok(LocalDensity {
        y: cfg.y_grid.clone(),
        density: positive.iter().map(|f| f / normalization).collect(),
        normalization,
        trim_mass,
        imag_residual: if max_re > 0.0 { max_im / max_re } else { f64::INFINITY },
    })
}

impl LocalDensity {
    pub fn integral(&self) -> f64 {
        trapezoid_weights(&self.y)
            .iter()
            .zip(&self.density)
            .map(|(w, f)| w * f)
            .sum()
    }

    /// `max |f(y) - f(-y)|` over a grid symmetric about zero.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.density.len();
        (0..n)
            .map(|i| (self.density[i] - self.density[n - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn peak(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }
}
