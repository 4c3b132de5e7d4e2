//! Experiment harness: runs the estimate and domain checks over a matrix of
//! weights, dimensions, `lambda` and test functions and assembles a report.

pub mod config;
pub mod domain;
pub mod estimates;
pub mod report;

use std::sync::Arc;

pub use config::{ExperimentConfig, Task, WeightKind, WeightSpec};
pub use report::{EstimateReport, EstimateRow, Quantity};

use crate::error::{ensure_finite, Result};
use crate::functions::SmoothFn;
use crate::galerkin::{Base, LatticeWeight, TruncatedWeight, TruncationConfig};
use crate::rng;
use crate::sampling::{weighted_sample, ISConfig};
use crate::stats::{weighted_delta, MCValue};
use crate::weight::{dot, parse_weight, ConvexWeight, Quadratic, WeightRef, Zero};
use crate::wiener::{MaxEndpointWeight, WienerBasis};

/// A configured weight at one truncation level.
pub struct Realized {
    pub name: String,
    pub n: usize,
    pub weight: WeightRef,
    /// The untruncated max-endpoint weight, for the strong-solution ladder.
    pub full: Option<Arc<MaxEndpointWeight>>,
}

/// The energy weight at level `n` is used in its closed form
/// `sum_{i<=n} lambda_i x_i^2` (the Gaussian tail only adds a constant,
/// which cancels in every normalized quantity). The max-endpoint weight is
/// tail-averaged over `mc.tail_samples` draws, mollified at `eps = 1/n` and
/// tabulated on the grid mesh.
pub fn realize(cfg: &ExperimentConfig, spec: &WeightSpec, n: usize) -> Result<Realized> {
    let name = spec.name();
    let (weight, full): (WeightRef, _) = match spec.kind {
        WeightKind::Zero => (Arc::new(Zero { dim: n }), None),
        WeightKind::Energy => (Arc::new(Quadratic::new((0..n).map(|k| 2.0 * WienerBasis::eigenvalue(k)).collect())), None),
        WeightKind::Custom => (parse_weight(spec.spec.as_deref().unwrap_or(""), n)?, None),
        WeightKind::MaxEndpoint => {
            let full = Arc::new(MaxEndpointWeight::new(spec.modes, spec.grid_points));
            let tc = TruncationConfig { mc_samples: cfg.mc.tail_samples, seed: rng::derive_seed(cfg.seed, rng::tag_of("tail")) };
            let t = TruncatedWeight::new(Base::MaxEndpoint(full.clone()), n, tc)?;
            let lat = LatticeWeight::mollified(&t, 1.0 / n as f64, cfg.grid.mesh(n), cfg.grid.radius)?;
            (Arc::new(lat), Some(full))
        }
    };
    Ok(Realized { name, n, weight, full })
}

/// Self-normalized `L2(e^{-psi} gamma_n)` norm of `g` (order 0), of its
/// gradient (order 1) or of its Hessian in Hilbert-Schmidt norm (order 2).
pub fn weighted_norm(g: &dyn SmoothFn, w: &dyn ConvexWeight, order: usize, mc: &ISConfig) -> Result<MCValue> {
    let s = weighted_sample(w, mc);
    let mut col = Vec::with_capacity(s.points.len());
    for x in &s.points {
        let v = match order {
            0 => g.value(x).powi(2),
            1 => {
                let gr = g.gradient(x);
                dot(&gr, &gr)
            }
            _ => {
                let h = g.hessian(x);
                dot(&h, &h)
            }
        };
        col.push(ensure_finite("integrand", v)?);
    }
    let (m, se) = weighted_delta(&s.weights, &[col], |v| v[0].sqrt());
    Ok(MCValue { mean: m, std_error: se, paths_used: s.points.len(), bias_bound: 0.0 })
}

/// Runs the configured tasks and returns the sorted report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for task in &cfg.tasks {
        match task {
            Task::Main => rows.extend(estimates::verify_main_estimates(cfg)?),
            Task::Domain => rows.extend(domain::verify_domain_equivalence(cfg)?),
        }
    }
    let mut report = EstimateReport { rows };
    report.sort();
    Ok(report)
}
