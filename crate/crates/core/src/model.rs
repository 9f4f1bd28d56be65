//! Parameter space, observations, and the two-location transfer function.
//!
//! At a fixed design point the conditional law of the response is a
//! two-location mixture of one symmetric density. Its characteristic
//! function factors as `M(t, u) * f*(u)` with `f*` real, where
//!
//! ```text
//! M(t, u) = pi * exp(i u a) + (1 - pi) * exp(i u b)
//! ```
//!
//! is the transfer function implemented by [`transfer`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this modulus the transfer function is treated as vanished.
pub const DEGENERATE_MODULUS: f64 = 1e-12;

/// Local parameter `(pi, a, b)` at one design point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub pi: f64,
    pub a: f64,
    pub b: f64,
}

impl ThetaPoint {
    pub fn new(pi: f64, a: f64, b: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "proportion must lie in (0, 1), got {pi}"
            )));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "locations must be finite, got a = {a}, b = {b}"
            )));
        }
        Ok(ThetaPoint { pi, a, b })
    }

    /// The other representation of the same mixture, `(1 - pi, b, a)`.
    pub fn swapped(&self) -> Self {
        ThetaPoint {
            pi: 1.0 - self.pi,
            a: self.b,
            b: self.a,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.pi, self.a, self.b]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        ThetaPoint {
            pi: v[0],
            a: v[1],
            b: v[2],
        }
    }
}

/// Box `[pi_lo, pi_hi] x [loc_lo, loc_hi]^2` searched by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub pi_lo: f64,
    pub pi_hi: f64,
    pub loc_lo: f64,
    pub loc_hi: f64,
}

impl ParamSpace {
    pub const PRACTICAL_PI: (f64, f64) = (0.05, 0.95);
    pub const STRICT_PI: (f64, f64) = (0.05, 0.45);

    pub fn new(pi_lo: f64, pi_hi: f64, loc_lo: f64, loc_hi: f64) -> Result<Self> {
        if !(pi_lo > 0.0 && pi_lo <= pi_hi && pi_hi < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < pi_lo <= pi_hi < 1, got [{pi_lo}, {pi_hi}]"
            )));
        }
        if !(loc_lo.is_finite() && loc_hi.is_finite() && loc_lo < loc_hi) {
            return Err(Error::InvalidParameter(format!(
                "need finite loc_lo < loc_hi, got [{loc_lo}, {loc_hi}]"
            )));
        }
        Ok(ParamSpace {
            pi_lo,
            pi_hi,
            loc_lo,
            loc_hi,
        })
    }

    /// Unconstrained proportion box `[0.05, 0.95]`.
    pub fn practical(loc_lo: f64, loc_hi: f64) -> Result<Self> {
        Self::new(Self::PRACTICAL_PI.0, Self::PRACTICAL_PI.1, loc_lo, loc_hi)
    }

    /// Proportion restricted below one half, `[0.05, 0.45]`.
    pub fn strict(loc_lo: f64, loc_hi: f64) -> Result<Self> {
        Self::new(Self::STRICT_PI.0, Self::STRICT_PI.1, loc_lo, loc_hi)
    }

    /// Location bounds spanning the observed responses.
    pub fn for_responses(data: &Dataset, strict: bool) -> Result<Self> {
        let (lo, hi) = data.response_range();
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        if strict {
            Self::strict(lo, hi)
        } else {
            Self::practical(lo, hi)
        }
    }

    pub fn lower(&self) -> [f64; 3] {
        [self.pi_lo, self.loc_lo, self.loc_lo]
    }

    pub fn upper(&self) -> [f64; 3] {
        [self.pi_hi, self.loc_hi, self.loc_hi]
    }

    pub fn contains(&self, t: &ThetaPoint) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        t.to_array()
            .iter()
            .enumerate()
            .all(|(i, &v)| v >= lo[i] && v <= hi[i])
    }

    pub fn clamp(&self, t: &ThetaPoint) -> ThetaPoint {
        let (lo, hi) = (self.lower(), self.upper());
        let mut v = t.to_array();
        for i in 0..3 {
            v[i] = v[i].clamp(lo[i], hi[i]);
        }
        ThetaPoint::from_array(v)
    }
}

/// One observation `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Observations stored column-wise; design rows are contiguous slices of
/// length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations.first().ok_or(Error::InsufficientData {
            needed: 1,
            got: 0,
        })?;
        let d = first.x.len();
        if d == 0 {
            return Err(Error::InvalidParameter("design dimension is zero".into()));
        }
        let mut xs = Vec::with_capacity(observations.len() * d);
        let mut ys = Vec::with_capacity(observations.len());
        for (i, obs) in observations.iter().enumerate() {
            if obs.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: obs.x.len(),
                });
            }
            if !obs.y.is_finite() || obs.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "observation {i} has a non-finite coordinate"
                )));
            }
            xs.extend_from_slice(&obs.x);
            ys.push(obs.y);
        }
        Ok(Dataset { d, xs, ys })
    }

    /// Univariate design.
    pub fn from_xy(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch(x.len(), y.len()));
        }
        Self::new(
            x.iter()
                .zip(y)
                .map(|(&x, &y)| Observation { x: vec![x], y })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.ys
    }

    pub fn observations(&self) -> impl Iterator<Item = Observation> + '_ {
        (0..self.len()).map(|i| Observation {
            x: self.x(i).to_vec(),
            y: self.y(i),
        })
    }

    /// Subset keeping the rows where `keep` is true.
    pub fn filter(&self, keep: &[bool]) -> Option<Dataset> {
        let obs: Vec<_> = self
            .observations()
            .zip(keep)
            .filter_map(|(o, &k)| k.then_some(o))
            .collect();
        Dataset::new(obs).ok()
    }

    pub fn response_range(&self) -> (f64, f64) {
        self.ys
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                (lo.min(y), hi.max(y))
            })
    }

    pub fn response_sd(&self) -> f64 {
        let n = self.len() as f64;
        if self.len() < 2 {
            return 0.0;
        }
        let mean = self.ys.iter().sum::<f64>() / n;
        let ss: f64 = self.ys.iter().map(|y| (y - mean) * (y - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    }
}

/// `M(t, u) = pi e^{iua} + (1 - pi) e^{iub}`.
pub fn transfer(t: &ThetaPoint, u: f64) -> Complex64 {
    let (sa, ca) = (u * t.a).sin_cos();
    let (sb, cb) = (u * t.b).sin_cos();
    let q = 1.0 - t.pi;
    Complex64::new(t.pi * ca + q * cb, t.pi * sa + q * sb)
}

/// `1 / M(t, u)`, failing when the transfer function vanishes.
pub fn inverse_transfer(t: &ThetaPoint, u: f64) -> Result<Complex64> {
    let m = transfer(t, u);
    let modulus = m.norm();
    if !(modulus >= DEGENERATE_MODULUS) {
        return Err(Error::DegenerateTransfer { u, modulus });
    }
    Ok(m.inv())
}

/// `Im(g_star / M(t, u))`, which vanishes identically in `u` at the true
/// parameter when `g_star` is the local characteristic function.
pub fn imag_ratio(t: &ThetaPoint, g_star: Complex64, u: f64) -> Result<f64> {
    Ok((g_star * inverse_transfer(t, u)?).im)
}
