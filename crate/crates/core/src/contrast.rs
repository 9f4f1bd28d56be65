//! Empirical and Monte-Carlo contrasts.
//!
//! With `Z_k(t, u) = i z_k(t, u)` and `z_k = 2 kappa_k Im(e^{iuY_k} / M(t, u))`,
//! the pair sum at one frequency is
//!
//! ```text
//! sum_{j != k} Z_j Z_k = -[(sum_k z_k)^2 - sum_k z_k^2]
//! ```
//!
//! Writing `e^{iuY_k} = c_k + i s_k` and `1 / M = p + i q`, `z_k` is linear
//! in `(p, q)` with data-only coefficients, so both sums are quadratic forms
//! in `(p, q)` over five per-frequency moments of the data. The evaluator
//! computes those moments once; each contrast evaluation afterwards costs
//! `O(N)` whatever the sample size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kernels::{scaled_kernel_at, weight_pdf, weight_sample, Bandwidth, KernelFn, WeightDensity};
use crate::model::{inverse_transfer, transfer, Dataset, ThetaPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastConfig {
    pub x0: Vec<f64>,
    pub h: Bandwidth,
    pub kernel: KernelFn,
    pub weight: WeightDensity,
    /// Number of Monte-Carlo frequency nodes.
    pub n_mc: usize,
    pub seed: u64,
}

impl ContrastConfig {
    pub fn new(x0: Vec<f64>, h: Bandwidth, n_mc: usize, seed: u64) -> Self {
        let d = x0.len();
        ContrastConfig {
            x0,
            h,
            kernel: KernelFn::gaussian(d),
            weight: WeightDensity::default(),
            n_mc,
            seed,
        }
    }
}

/// Data moments at one frequency node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct NodeMoments {
    /// `sum kappa cos(uy)`
    c1: f64,
    /// `sum kappa sin(uy)`
    s1: f64,
    /// `sum kappa^2 cos^2(uy)`
    c2: f64,
    /// `sum kappa^2 cos(uy) sin(uy)`
    cs2: f64,
    /// `sum kappa^2 sin^2(uy)`
    s2: f64,
}

impl NodeMoments {
    fn accumulate(u: f64, local: &[(f64, f64)]) -> Self {
        let mut m = NodeMoments::default();
        for &(y, kappa) in local {
            let (s, c) = (u * y).sin_cos();
            let (kc, ks) = (kappa * c, kappa * s);
            m.c1 += kc;
            m.s1 += ks;
            m.c2 += kc * kc;
            m.cs2 += kc * ks;
            m.s2 += ks * ks;
        }
        m
    }

    /// `(sum z)^2 - sum z^2` at `1 / M = p + i q`.
    fn pair_sum(&self, p: f64, q: f64) -> f64 {
        let sum_z = 2.0 * (q * self.c1 + p * self.s1);
        let sum_z2 = 4.0 * (q * q * self.c2 + 2.0 * p * q * self.cs2 + p * p * self.s2);
        sum_z * sum_z - sum_z2
    }
}

/// Integration nodes and `du` weights on the frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::LengthMismatch(nodes.len(), weights.len()));
        }
        Ok(Quadrature { nodes, weights })
    }

    pub fn trapezoid(lo: f64, hi: f64, n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 || !(hi > lo) {
            return Err(Error::InvalidParameter(
                "trapezoid rule needs lo < hi and at least two nodes".into(),
            ));
        }
        let step = (hi - lo) / (n_nodes - 1) as f64;
        let nodes = (0..n_nodes).map(|i| lo + i as f64 * step).collect();
        let weights = (0..n_nodes)
            .map(|i| if i == 0 || i + 1 == n_nodes { 0.5 * step } else { step })
            .collect();
        Ok(Quadrature { nodes, weights })
    }

    /// Trapezoid on `[-6, 6]` with 2000 nodes.
    pub fn reference() -> Self {
        Self::trapezoid(-6.0, 6.0, 2000).expect("static grid")
    }
}

/// Contrast surface at one design point, with kernel weights and
/// frequency nodes fixed at construction.
#[derive(Debug, Clone)]
pub struct ContrastEvaluator {
    config: ContrastConfig,
    n: usize,
    kappa: Vec<f64>,
    /// `(y_k, kappa_k)` for observations with nonzero kernel weight.
    local: Vec<(f64, f64)>,
    nodes: Vec<f64>,
    moments: Vec<NodeMoments>,
}

impl ContrastEvaluator {
    pub fn new(config: ContrastConfig, data: &Dataset, exec: Exec) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: data.len(),
            });
        }
        if config.x0.len() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                got: config.x0.len(),
            });
        }
        if config.kernel.d != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                got: config.kernel.d,
            });
        }
        if config.n_mc == 0 {
            return Err(Error::InvalidParameter(
                "need at least one Monte-Carlo node".into(),
            ));
        }
        let nodes = weight_sample(&config.weight, config.n_mc, config.seed);
        Self::with_nodes(config, data, nodes, exec)
    }

    /// Evaluator over caller-supplied frequency nodes.
    pub fn with_nodes(
        config: ContrastConfig,
        data: &Dataset,
        nodes: Vec<f64>,
        exec: Exec,
    ) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: data.len(),
            });
        }
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("empty frequency node set".into()));
        }
        let h = config.h.get();
        let kappa: Vec<f64> = (0..data.len())
            .map(|k| scaled_kernel_at(&config.kernel, h, data.x(k), &config.x0))
            .collect();
        let local: Vec<(f64, f64)> = kappa
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(k, &w)| (data.y(k), w))
            .collect();
        let moments = exec.map_slice(&nodes, |&u| NodeMoments::accumulate(u, &local));
        let mut config = config;
        config.n_mc = nodes.len();
        Ok(ContrastEvaluator {
            config,
            n: data.len(),
            kappa,
            local,
            nodes,
            moments,
        })
    }

    pub fn config(&self) -> &ContrastConfig {
        &self.config
    }

    pub fn kernel_weights(&self) -> &[f64] {
        &self.kappa
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// Observations with strictly positive kernel weight.
    pub fn local_count(&self) -> usize {
        self.local.iter().filter(|(_, w)| *w > 0.0).count()
    }

    pub fn has_local_mass(&self) -> bool {
        !self.local.is_empty()
    }

    fn pair_normalizer(&self) -> f64 {
        let n = self.n as f64;
        4.0 * n * (n - 1.0)
    }

    /// Per-node terms whose mean is [`Self::mc_contrast`].
    pub fn node_contributions(&self, t: &ThetaPoint) -> Result<Vec<f64>> {
        let norm = self.pair_normalizer();
        self.nodes
            .iter()
            .zip(&self.moments)
            .map(|(&u, m)| {
                let inv = inverse_transfer(t, u)?;
                Ok(m.pair_sum(inv.re, inv.im) / norm)
            })
            .collect()
    }

    /// Monte-Carlo contrast `S^MC_n(t)` over the cached nodes.
    pub fn mc_contrast(&self, t: &ThetaPoint) -> Result<f64> {
        let mut total = 0.0;
        for (&u, m) in self.nodes.iter().zip(&self.moments) {
            let inv = inverse_transfer(t, u)?;
            total += m.pair_sum(inv.re, inv.im);
        }
        Ok(total / (self.pair_normalizer() * self.nodes.len() as f64))
    }

    /// Smallest `|M(t, u)|` over the cached nodes.
    pub fn min_transfer_modulus(&self, t: &ThetaPoint) -> f64 {
        self.nodes
            .iter()
            .map(|&u| transfer(t, u).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Empirical contrast `S_n(t)` integrated against `w` with the given rule.
    pub fn empirical_contrast(&self, t: &ThetaPoint, quad: &Quadrature) -> Result<f64> {
        let mut total = 0.0;
        for (&u, &du) in quad.nodes.iter().zip(&quad.weights) {
            let w = weight_pdf(&self.config.weight, u);
            if w == 0.0 || du == 0.0 {
                continue;
            }
            let inv = inverse_transfer(t, u)?;
            let m = NodeMoments::accumulate(u, &self.local);
            total += du * w * m.pair_sum(inv.re, inv.im);
        }
        Ok(total / self.pair_normalizer())
    }

    /// Central finite-difference gradient of [`Self::mc_contrast`].
    pub fn gradient_fd(&self, t: &ThetaPoint, step: f64) -> Result<[f64; 3]> {
        if !(step > 0.0) {
            return Err(Error::InvalidParameter("step must be positive".into()));
        }
        let base = t.to_array();
        let mut grad = [0.0; 3];
        for i in 0..3 {
            let (mut up, mut down) = (base, base);
            up[i] += step;
            down[i] -= step;
            let fu = self.mc_contrast(&ThetaPoint::from_array(up))?;
            let fd = self.mc_contrast(&ThetaPoint::from_array(down))?;
            grad[i] = (fu - fd) / (2.0 * step);
        }
        Ok(grad)
    }
}

/// Real coefficient `z` of `Z_k = i z`: `2 kappa Im(e^{iuy} / M(t, u))`.
pub fn z_term(t: &ThetaPoint, u: f64, y: f64, kappa: f64) -> Result<f64> {
    let inv = inverse_transfer(t, u)?;
    let (s, c) = (u * y).sin_cos();
    Ok(2.0 * kappa * (c * inv.im + s * inv.re))
}

pub fn empirical_contrast(ev: &ContrastEvaluator, t: &ThetaPoint, quad: &Quadrature) -> Result<f64> {
    ev.empirical_contrast(t, quad)
}

pub fn mc_contrast(ev: &ContrastEvaluator, t: &ThetaPoint) -> Result<f64> {
    ev.mc_contrast(t)
}

pub fn contrast_gradient_fd(ev: &ContrastEvaluator, t: &ThetaPoint, step: f64) -> Result<[f64; 3]> {
    ev.gradient_fd(t, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn toy_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        Dataset::from_xy(&x, &y).unwrap()
    }

    fn config(h: f64, n_mc: usize, seed: u64) -> ContrastConfig {
        ContrastConfig::new(vec![0.5], Bandwidth::new(h).unwrap(), n_mc, seed)
    }

    // Unfactorized O(n^2) pair sum straight from the complex Z_k.
    fn double_loop(ev: &ContrastEvaluator, data: &Dataset, t: &ThetaPoint, nodes: &[f64], w: &[f64]) -> f64 {
        let n = data.len();
        let mut total = 0.0;
        for (&u, &wu) in nodes.iter().zip(w) {
            let m = crate::model::transfer(t, u);
            let mneg = crate::model::transfer(t, -u);
            let zs: Vec<Complex64> = (0..n)
                .map(|k| {
                    let e = Complex64::new(0.0, u * data.y(k)).exp();
                    let f = Complex64::new(0.0, -u * data.y(k)).exp();
                    (e / m - f / mneg) * ev.kernel_weights()[k]
                })
                .collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                for k in 0..n {
                    if j != k {
                        acc += zs[j] * zs[k];
                    }
                }
            }
            total += wu * acc.re;
        }
        -total / (4.0 * n as f64 * (n as f64 - 1.0))
    }

    #[test]
    fn z_term_examples() {
        let t = ThetaPoint::new(0.3, 0.0, PI).unwrap();
        assert_eq!(z_term(&t, 0.0, 1.7, 2.0).unwrap(), 0.0);
        assert_eq!(z_term(&t, 1.3, 1.7, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(z_term(&t, 1.0, PI / 2.0, 1.0).unwrap(), -5.0, epsilon = 1e-12);
        let z = z_term(&t, 0.8, 1.1, 0.7).unwrap();
        assert_abs_diff_eq!(z_term(&t, -0.8, 1.1, 0.7).unwrap(), -z, epsilon = 1e-14);
    }

    #[test]
    fn empirical_contrast_matches_double_loop() {
        let data = toy_data(3, 1);
        let ev = ContrastEvaluator::new(config(0.4, 4, 0), &data, Exec::Sequential).unwrap();
        let quad = Quadrature::trapezoid(-2.5, 2.5, 5).unwrap();
        let w: Vec<f64> = quad
            .nodes
            .iter()
            .zip(&quad.weights)
            .map(|(&u, &du)| du * weight_pdf(&WeightDensity::NormalUniform, u))
            .collect();
        let t = ThetaPoint::new(0.35, 1.2, -0.7).unwrap();
        let fast = ev.empirical_contrast(&t, &quad).unwrap();
        let slow = double_loop(&ev, &data, &t, &quad.nodes, &w);
        assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1e-300), "{fast} {slow}");
    }

    #[test]
    fn factorization_identity_per_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.random_range(2..12);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let sum: f64 = z.iter().sum();
            let sq: f64 = z.iter().map(|v| v * v).sum();
            let mut pairs = 0.0;
            for j in 0..n {
                for k in 0..n {
                    if j != k {
                        pairs += z[j] * z[k];
                    }
                }
            }
            let scale = z.iter().map(|v| v.abs()).sum::<f64>().powi(2);
            assert!((sum * sum - sq - pairs).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_kernel_mass_gives_zero() {
        let data = Dataset::from_xy(&[10.0, 11.0, 12.0], &[1.0, 2.0, 3.0]).unwrap();
        let mut cfg = config(0.1, 16, 3);
        cfg.kernel = KernelFn::new(crate::kernels::KernelFamily::Epanechnikov, 1);
        let ev = ContrastEvaluator::new(cfg, &data, Exec::Sequential).unwrap();
        assert!(!ev.has_local_mass());
        let t = ThetaPoint::new(0.3, 1.0, -1.0).unwrap();
        assert_eq!(ev.mc_contrast(&t).unwrap(), 0.0);
        assert_eq!(ev.empirical_contrast(&t, &Quadrature::reference()).unwrap(), 0.0);
    }

    #[test]
    fn insufficient_data_is_rejected() {
        let data = Dataset::from_xy(&[0.5], &[1.0]).unwrap();
        assert!(matches!(
            ContrastEvaluator::new(config(0.2, 4, 0), &data, Exec::Sequential),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn mc_contrast_is_reproducible_and_swap_symmetric() {
        let data = toy_data(40, 2);
        let ev = ContrastEvaluator::new(config(0.3, 200, 8), &data, Exec::Parallel).unwrap();
        let t = ThetaPoint::new(0.3, 2.0, -1.0).unwrap();
        let a = ev.mc_contrast(&t).unwrap();
        assert_eq!(a.to_bits(), ev.mc_contrast(&t).unwrap().to_bits());
        let s = ev.mc_contrast(&t.swapped()).unwrap();
        assert!((a - s).abs() <= 1e-12 * a.abs());
        let ev_seq = ContrastEvaluator::new(config(0.3, 200, 8), &data, Exec::Sequential).unwrap();
        assert_eq!(a.to_bits(), ev_seq.mc_contrast(&t).unwrap().to_bits());
    }

    #[test]
    fn node_contribution_even_in_frequency() {
        let data = toy_data(25, 4);
        let t = ThetaPoint::new(0.3, 1.0, -2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nodes: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let neg: Vec<f64> = nodes.iter().map(|u| -u).collect();
        let a = ContrastEvaluator::with_nodes(config(0.3, 1, 0), &data, nodes, Exec::Sequential)
            .unwrap()
            .node_contributions(&t)
            .unwrap();
        let b = ContrastEvaluator::with_nodes(config(0.3, 1, 0), &data, neg, Exec::Sequential)
            .unwrap()
            .node_contributions(&t)
            .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-12));
        }
    }

    #[test]
    fn gradient_symmetry_and_forward_difference() {
        let data = toy_data(60, 6);
        let ev = ContrastEvaluator::new(config(0.3, 300, 1), &data, Exec::Sequential).unwrap();
        let t = ThetaPoint::new(0.3, 1.5, -1.0).unwrap();
        let g = ev.gradient_fd(&t, 1e-5).unwrap();
        let gs = ev.gradient_fd(&t.swapped(), 1e-5).unwrap();
        let scale = g.iter().map(|v| v.abs()).fold(1e-8, f64::max);
        assert!((g[0] + gs[0]).abs() < 1e-5 * scale);
        assert!((g[1] - gs[2]).abs() < 1e-5 * scale);
        assert!((g[2] - gs[1]).abs() < 1e-5 * scale);

        // Forward differences with half the step, accurate to O(step).
        let step = 1e-4;
        let f0 = ev.mc_contrast(&t).unwrap();
        let g = ev.gradient_fd(&t, step).unwrap();
        for i in 0..3 {
            let mut v = t.to_array();
            v[i] += step / 2.0;
            let fwd = (ev.mc_contrast(&ThetaPoint::from_array(v)).unwrap() - f0) / (step / 2.0);
            assert!((fwd - g[i]).abs() < 50.0 * step * (1.0 + g[i].abs()), "{i}: {fwd} {}", g[i]);
        }
    }
}
