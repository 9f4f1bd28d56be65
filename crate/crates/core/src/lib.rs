//! Pointwise semiparametric estimation of a two-component mixture of
//! regressions
//!
//! ```text
//! Y = W(X) (a(X) + e) + (1 - W(X)) (b(X) + e),   P(W(x) = 1) = pi(x),
//! ```
//!
//! where the error density may change with the design point but is
//! symmetric about zero at every `x`. At a testing point `x0` the local
//! parameter `(pi, a, b)` minimizes a Fourier contrast built from the
//! kernel-weighted empirical characteristic function of the responses.
//!
//! Module map:
//!
//! * [`model`]: parameters, data, transfer function.
//! * [`kernels`]: smoothing kernels, frequency-weight density.
//! * [`contrast`]: empirical and Monte-Carlo contrast.
//! * [`estimator`]: initialization and per-point minimization.
//! * [`density`]: local error-density recovery.
//! * [`simulation`]: scenarios, RASE metrics, replication study.

// Guards like `!(h > 0.0)` reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contrast;
pub mod density;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod seed;
pub mod simulation;

pub use contrast::{ContrastConfig, ContrastEvaluator, Quadrature};
pub use error::{Error, Result};
pub use estimator::{fit_curve, fit_point, BandwidthRule, FitOptions, FitResult, PointFit};
pub use exec::Exec;
pub use kernels::{Bandwidth, KernelFamily, KernelFn, WeightDensity};
pub use model::{transfer, Dataset, Observation, ParamSpace, ThetaPoint};
pub use simulation::{run_study, sample_dataset, sample_labeled, true_theta, Scenario, StudyOptions, StudyReport};
