//! Self-normalized importance sampling under `exp(-U) gamma_n`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::stats::{weighted_delta, MCValue};
use crate::weight::ConvexWeight;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ISConfig {
    pub samples: usize,
    pub seed: u64,
}

/// Standard Gaussian points in `R^n` with weights `exp(-(U - min U))`.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Coordinate `i` of every point comes from its own stream, so the first `k`
/// coordinates of the points agree for every `n >= k`.
pub fn gaussian_points(n: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, rng::tag_of("gaussian_points"), i as u64);
            (0..samples).map(|_| r.sample(StandardNormal)).collect()
        })
        .collect();
    (0..samples).map(|k| cols.iter().map(|c| c[k]).collect()).collect()
}

pub fn weighted_sample(w: &dyn ConvexWeight, cfg: &ISConfig) -> WeightedSample {
    let points = gaussian_points(w.dim(), cfg.samples, cfg.seed);
    let u: Vec<f64> = points.iter().map(|p| w.value(p)).collect();
    let m = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights = u.iter().map(|v| (-(v - m)).exp()).collect();
    WeightedSample { points, weights }
}

impl WeightedSample {
    /// Self-normalized mean of `g` with delta-method standard error.
    pub fn mean(&self, g: impl Fn(&[f64]) -> f64) -> MCValue {
        let col: Vec<f64> = self.points.iter().map(|p| g(p)).collect();
        let (m, se) = weighted_delta(&self.weights, &[col], |v| v[0]);
        MCValue { mean: m, std_error: se, paths_used: self.points.len(), bias_bound: 0.0 }
    }

    /// Kish effective sample size.
    pub fn effective_size(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        s * s / s2
    }
}
