//! Graph norm versus second-order Sobolev norm, and dissipativity, on
//! cylindrical test functions with analytic derivatives.

use std::f64::consts::SQRT_2;

use super::config::ExperimentConfig;
use super::realize;
use super::report::{EstimateRow, Quantity, RowKey};
use crate::error::Result;
use crate::functions::{named_test_function, SmoothFn};
use crate::rng;
use crate::sampling::{weighted_sample, ISConfig};
use crate::stats::weighted_delta;
use crate::weight::{dot, ConvexWeight};

/// `L_nu u = sum_i d_ii u - sum_i (d_i psi + x_i) d_i u`.
pub fn generator(w: &dyn ConvexWeight, u: &dyn SmoothFn, x: &[f64]) -> f64 {
    crate::grid::apply_generator(w, u, x)
}

/// Columns `u^2, (L u)^2, |grad u|^2, |hess u|_HS^2, u L u` at the points.
pub fn domain_columns(w: &dyn ConvexWeight, u: &dyn SmoothFn, points: &[Vec<f64>]) -> [Vec<f64>; 5] {
    let mut cols: [Vec<f64>; 5] = Default::default();
    for x in points {
        let v = u.value(x);
        let g = u.gradient(x);
        let h = u.hessian(x);
        let lu = generator(w, u, x);
        cols[0].push(v * v);
        cols[1].push(lu * lu);
        cols[2].push(dot(&g, &g));
        cols[3].push(dot(&h, &h));
        cols[4].push(v * lu);
    }
    cols
}

/// `||u||_D = ||u|| + ||L u||` and `||u||_W = ||u|| + ||grad u|| + ||hess u||`.
fn graph_norm(m: &[f64]) -> f64 {
    m[0].sqrt() + m[1].sqrt()
}
fn sobolev_norm(m: &[f64]) -> f64 {
    m[0].sqrt() + m[2].sqrt() + m[3].sqrt()
}

pub fn verify_domain_equivalence(cfg: &ExperimentConfig) -> Result<Vec<EstimateRow>> {
    let mut rows = Vec::new();
    let upper = 2.0 + SQRT_2;
    for spec in &cfg.weights {
        for n in cfg.dims_for(spec) {
            let real = realize(cfg, spec, n)?;
            let is = ISConfig { samples: cfg.mc.is_samples, seed: rng::derive_seed(cfg.seed, rng::tag_of("domain")) };
            let sample = weighted_sample(&*real.weight, &is);
            for uname in &cfg.experiment.domain_functions {
                let u = named_test_function(uname, n)?;
                let cols = domain_columns(&*real.weight, &*u, &sample.points);
                let k = |d: &str| RowKey { weight: real.name.clone(), n, lambda: None, test_function: uname.clone(), detail: d.into() };
                let (r, se) = weighted_delta(&sample.weights, &cols[..4], |m| sobolev_norm(m) / graph_norm(m));
                rows.push(EstimateRow::checked(&k("upper W/D"), Quantity::DomainEquivRatio, r, se, upper, 0.0));
                let (r, se) = weighted_delta(&sample.weights, &cols[..4], |m| graph_norm(m) / sobolev_norm(m));
                rows.push(EstimateRow::checked(&k("lower D/W"), Quantity::DomainEquivRatio, r, se, 1.0, 0.0));
                let (d, se) = weighted_delta(&sample.weights, &cols[4..], |m| m[0]);
                rows.push(EstimateRow::checked(&k("int u L u"), Quantity::Dissipativity, d, se, 0.0, 0.0));
            }
        }
    }
    Ok(rows)
}
