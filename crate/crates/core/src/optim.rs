//! Box-constrained Nelder-Mead.
//!
//! Trial points falling outside the box are mirrored back across the
//! violated face (then clamped), so every evaluated vertex is feasible.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop when the largest vertex-to-vertex distance drops below this.
    pub diameter_tol: f64,
    pub max_iter: usize,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            diameter_tol: 1e-5,
            max_iter: 500,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::LengthMismatch(lower.len(), upper.len()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidParameter("lower bound above upper bound".into()));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn reflect(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if *v < lo {
                *v = lo + (lo - *v);
            } else if *v > hi {
                *v = hi - (*v - hi);
            }
            *v = v.clamp(lo, hi);
        }
    }
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..simplex.len() {
        for j in i + 1..simplex.len() {
            let dist = simplex[i]
                .iter()
                .zip(&simplex[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d = d.max(dist);
        }
    }
    d
}

/// Minimize `f` from `start` with per-coordinate initial steps. `f` may
/// return `+inf` to reject a point; NaN and `-inf` abort the search.
///
/// A collapsed simplex can stop short of a minimum, so after convergence
/// the search restarts around the best vertex with a tenth of the initial
/// steps, until the best vertex moves less than `diameter_tol`. Restarts
/// share the `max_iter` budget.
pub fn nelder_mead<F>(
    mut f: F,
    start: &[f64],
    steps: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let dim = start.len();
    if steps.len() != dim || bounds.lower.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: steps.len(),
        });
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| -> Result<f64> {
        evaluations += 1;
        let v = f(x)?;
        // +inf marks an infeasible point; it simply loses every comparison.
        if v.is_finite() || v == f64::INFINITY {
            Ok(v)
        } else {
            Err(Error::NonFiniteContrast(format!("{x:?}")))
        }
    };

    let mut x0 = start.to_vec();
    bounds.reflect(&mut x0);
    let mut run = simplex_search(&mut eval, &x0, steps, bounds, opts, opts.max_iter)?;
    let mut iterations = run.iterations;
    let small: Vec<f64> = steps.iter().map(|s| 0.1 * s).collect();
    for _ in 0..MAX_RESTARTS {
        if !run.converged || iterations >= opts.max_iter {
            break;
        }
        let next = simplex_search(&mut eval, &run.x, &small, bounds, opts, opts.max_iter - iterations)?;
        iterations += next.iterations;
        let moved = distance(&next.x, &run.x);
        if next.value <= run.value {
            run = next;
        }
        if moved < opts.diameter_tol {
            break;
        }
    }
    Ok(Minimum {
        x: run.x,
        value: run.value,
        iterations,
        evaluations,
        converged: run.converged,
    })
}

const MAX_RESTARTS: usize = 10;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

struct Run {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn simplex_search(
    eval: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x0: &[f64],
    steps: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
    max_iter: usize,
) -> Result<Run> {
    let dim = x0.len();
    let mut simplex = vec![x0.to_vec()];
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        if v[i] > bounds.upper[i] || v[i] < bounds.lower[i] {
            v[i] = x0[i] - steps[i];
        }
        bounds.reflect(&mut v);
        simplex.push(v);
    }
    let mut values = Vec::with_capacity(dim + 1);
    for v in &simplex {
        values.push(eval(v)?);
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Stable sort keeps the start vertex first on ties.
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if diameter(&simplex) < opts.diameter_tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|v| v[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..dim)
                .map(|j| centroid[j] + coef * (simplex[dim][j] - centroid[j]))
                .collect();
            bounds.reflect(&mut p);
            p
        };

        let xr = along(-opts.reflection);
        let fr = eval(&xr)?;
        if fr < values[0] {
            let xe = along(-opts.reflection * opts.expansion);
            let fe = eval(&xe)?;
            if fe < fr {
                simplex[dim] = xe;
                values[dim] = fe;
            } else {
                simplex[dim] = xr;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = xr;
            values[dim] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[dim] {
            let xc = along(-opts.reflection * opts.contraction);
            let fc = eval(&xc)?;
            (xc, fc)
        } else {
            let xc = along(opts.contraction);
            let fc = eval(&xc)?;
            (xc, fc)
        };
        if fc < values[dim].min(fr) {
            simplex[dim] = xc;
            values[dim] = fc;
            continue;
        }
        for i in 1..=dim {
            let mut p: Vec<f64> = (0..dim)
                .map(|j| simplex[0][j] + opts.shrink * (simplex[i][j] - simplex[0][j]))
                .collect();
            bounds.reflect(&mut p);
            values[i] = eval(&p)?;
            simplex[i] = p;
        }
    }
    Ok(Run {
        x: simplex.swap_remove(0),
        value: values[0],
        iterations,
        converged,
    })
}
