//! Monte Carlo estimates and their standard errors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCValue {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(paths_used)`.
    pub std_error: f64,
    pub paths_used: usize,
    /// Deterministic error allowance (quadrature tail, finite-difference
    /// discretization). Zero when not applicable.
    pub bias_bound: f64,
}

impl MCValue {
    pub fn exact(v: f64) -> Self {
        MCValue { mean: v, std_error: 0.0, paths_used: 0, bias_bound: 0.0 }
    }

    /// Mean and standard error of i.i.d. samples. Sums are taken relative to
    /// the first sample so that constant samples give an exact mean and a
    /// zero standard error.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MCValue { mean: f64::NAN, std_error: f64::NAN, paths_used: 0, bias_bound: 0.0 };
        }
        let shift = xs[0];
        let (mut s, mut s2) = (0.0, 0.0);
        for &x in xs {
            let d = x - shift;
            s += d;
            s2 += d * d;
        }
        let nf = n as f64;
        let dm = s / nf;
        let var = if n > 1 { ((s2 - nf * dm * dm) / (nf - 1.0)).max(0.0) } else { 0.0 };
        MCValue { mean: shift + dm, std_error: (var / nf).sqrt(), paths_used: n, bias_bound: 0.0 }
    }

    pub fn with_bias(mut self, b: f64) -> Self {
        self.bias_bound = b;
        self
    }

    /// `|mean - target| <= k * std_error + bias_bound + abs_tol`.
    pub fn agrees_with(&self, target: f64, k: f64, abs_tol: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + self.bias_bound + abs_tol
    }
}

/// Self-normalized weighted estimate of `g(m_1, .., m_J)` where
/// `m_j = sum_k w_k a_jk / sum_k w_k`, with a delta-method standard error.
///
/// `columns[j][k]` is integrand `j` at sample `k`.
pub fn weighted_delta<G>(weights: &[f64], columns: &[Vec<f64>], g: G) -> (f64, f64)
where
    G: Fn(&[f64]) -> f64,
{
    let n = weights.len();
    let sw: f64 = weights.iter().sum();
    let means: Vec<f64> = columns
        .iter()
        .map(|c| {
            debug_assert_eq!(c.len(), n);
            let shift = c[0];
            shift + weights.iter().zip(c).map(|(w, a)| w * (a - shift)).sum::<f64>() / sw
        })
        .collect();
    let theta = g(&means);
    let mut grad = vec![0.0; means.len()];
    for j in 0..means.len() {
        // A constant column carries no sampling error.
        if columns[j].iter().all(|a| *a == columns[j][0]) {
            continue;
        }
        let step = 1e-6 * (1.0 + means[j].abs());
        let mut p = means.clone();
        p[j] = means[j] + step;
        let up = g(&p);
        p[j] = means[j] - step;
        let dn = g(&p);
        // One-sided at the edge of the domain of g (e.g. sqrt at 0).
        grad[j] = if dn.is_finite() { (up - dn) / (2.0 * step) } else { (up - theta) / step };
    }
    let mut var = 0.0;
    for k in 0..n {
        let lin: f64 = columns
            .iter()
            .zip(&grad)
            .zip(&means)
            .map(|((c, gj), mj)| if *gj == 0.0 { 0.0 } else { gj * (c[k] - mj) })
            .sum();
        let wk = weights[k] / sw;
        var += wk * wk * lin * lin;
    }
    (theta, var.sqrt())
}

/// Ordinary least squares slope of `y` on `x` with its standard error,
/// given per-point standard errors of `y` (treated as independent).
pub fn ls_slope(x: &[f64], y: &[f64], y_se: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - xm) * (yi - ym)).sum();
    let slope = sxy / sxx;
    let var: f64 = x.iter().zip(y_se).map(|(xi, s)| ((xi - xm) / sxx).powi(2) * s * s).sum();
    (slope, var.sqrt())
}
