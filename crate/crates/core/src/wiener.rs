//! Classical Wiener space on `[0, 1]` in Karhunen-Loeve coordinates.
//!
//! Mode `k` (0-based) has covariance eigenvalue `lambda_k = 4 / (pi^2 (2k+1)^2)`
//! and L2-normalized eigenfunction `e_k(s) = sqrt(2) sin(s / sqrt(lambda_k))`.
//! Coordinates are taken in the Cameron-Martin orthonormal frame
//! `h_k = sqrt(lambda_k) e_k`, where Wiener measure has i.i.d. standard normal
//! coordinates and a path is `W = sum_k xi_k h_k`.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::functions::{FnRef, SmoothFn};
use crate::rng;
use crate::sampling::{weighted_sample, ISConfig};
use crate::stats::{weighted_delta, MCValue};
use crate::weight::ConvexWeight;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WienerBasis {
    pub modes: usize,
}

impl WienerBasis {
    pub fn new(modes: usize) -> Self {
        WienerBasis { modes }
    }

    pub fn eigenvalue(k: usize) -> f64 {
        let d = (2 * k + 1) as f64 * PI;
        4.0 / (d * d)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.modes).map(Self::eigenvalue).collect()
    }

    /// `e_k(s) = sqrt(2) sin((2k+1) pi s / 2)`.
    pub fn e(k: usize, s: f64) -> f64 {
        SQRT_2 * ((2 * k + 1) as f64 * PI * s / 2.0).sin()
    }

    /// `h_k(s) = sqrt(lambda_k) e_k(s)`.
    pub fn h(k: usize, s: f64) -> f64 {
        Self::eigenvalue(k).sqrt() * Self::e(k, s)
    }

    /// Largest deviation of the L2 Gram matrix of `e_0..e_{m-1}` from the
    /// identity, by composite Simpson quadrature with `nodes` intervals.
    pub fn orthonormality_error(&self, nodes: usize) -> f64 {
        let n = nodes + nodes % 2;
        let ds = 1.0 / n as f64;
        let wts: Vec<f64> = (0..=n)
            .map(|j| {
                let c = if j == 0 || j == n {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * ds / 3.0
            })
            .collect();
        let vals: Vec<Vec<f64>> = (0..self.modes).map(|k| (0..=n).map(|j| Self::e(k, j as f64 * ds)).collect()).collect();
        let mut worst = 0.0f64;
        for a in 0..self.modes {
            for b in a..self.modes {
                let g: f64 = (0..=n).map(|j| wts[j] * vals[a][j] * vals[b][j]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// Uniform grid `s_j = j / (points - 1)` including both endpoints.
    pub fn uniform_grid(points: usize) -> Vec<f64> {
        (0..points).map(|j| j as f64 / (points - 1) as f64).collect()
    }

    /// Table `h_k(s_j)`, laid out `[k][j]`.
    pub fn h_table(&self, grid: &[f64]) -> Vec<Vec<f64>> {
        (0..self.modes).map(|k| grid.iter().map(|s| Self::h(k, *s)).collect()).collect()
    }
}

/// `|f|_H^2 = sum_k c_k^2 / lambda_k` from L2 sine coefficients `c_k = <f, e_k>`.
pub fn cm_norm_sq(l2_coeffs: &[f64]) -> f64 {
    l2_coeffs.iter().enumerate().map(|(k, c)| c * c / WienerBasis::eigenvalue(k)).sum()
}

#[derive(Debug, Clone)]
pub struct KLPathSample {
    /// Cameron-Martin frame coordinates.
    pub coeffs: Vec<f64>,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl KLPathSample {
    pub fn from_coeffs(coeffs: Vec<f64>, grid: Vec<f64>) -> Self {
        let values = grid
            .iter()
            .map(|s| coeffs.iter().enumerate().map(|(k, c)| c * WienerBasis::h(k, *s)).sum())
            .collect();
        KLPathSample { coeffs, grid, values }
    }

    /// A path given directly by grid values (no mode representation).
    pub fn from_values(grid: Vec<f64>, values: Vec<f64>) -> Self {
        KLPathSample { coeffs: Vec::new(), grid, values }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "xi,W")?;
        for (s, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{s},{v}")?;
        }
        Ok(())
    }
}

/// Path `index` of the Karhunen-Loeve sampler keyed by `seed`.
pub fn sample_path(basis: &WienerBasis, grid: &[f64], seed: u64, index: u64) -> KLPathSample {
    let mut r = rng::stream(seed, rng::tag_of("kl_path"), index);
    let coeffs: Vec<f64> = (0..basis.modes).map(|_| r.sample(StandardNormal)).collect();
    KLPathSample::from_coeffs(coeffs, grid.to_vec())
}

/// `U(f) = int_0^1 f^2 = sum_k lambda_k xi_k^2` with H-gradient `2 lambda_k xi_k`.
#[derive(Debug, Clone)]
pub struct EnergyWeight {
    pub lambdas: Vec<f64>,
}

impl EnergyWeight {
    pub fn new(modes: usize) -> Self {
        EnergyWeight { lambdas: WienerBasis::new(modes).eigenvalues() }
    }
}

impl ConvexWeight for EnergyWeight {
    fn dim(&self) -> usize {
        self.lambdas.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.lambdas.iter().zip(x).map(|(l, v)| l * v * v).sum()
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        for ((gi, l), v) in g.iter_mut().zip(&self.lambdas).zip(x) {
            *gi = 2.0 * l * v;
        }
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        Some(2.0 * self.lambdas.first().copied().unwrap_or(0.0))
    }
    fn label(&self) -> String {
        "energy".into()
    }
}

/// Energy weight of `f` given by L2 sine coefficients `c_k = <f, e_k>`:
/// value `sum c_k^2` (Parseval) and the H-frame gradient `2 sqrt(lambda_k) c_k`.
pub fn energy_weight(l2_coeffs: &[f64]) -> (f64, Vec<f64>) {
    let value = l2_coeffs.iter().map(|c| c * c).sum();
    let grad = l2_coeffs.iter().enumerate().map(|(k, c)| 2.0 * WienerBasis::eigenvalue(k).sqrt() * c).collect();
    (value, grad)
}

#[derive(Debug, Clone)]
pub struct MaxEndpointEval {
    pub value: f64,
    pub argmax_index: usize,
    pub argmax: f64,
    /// Set when the grid maximum is attained more than once.
    pub tie: bool,
    /// H-frame gradient `h_k(argmax) + h_k(1)`; empty without a mode representation.
    pub gradient: Vec<f64>,
}

/// First-index grid maximum of `values`, with a tie flag.
pub fn grid_argmax(values: &[f64]) -> (usize, bool) {
    let mut best = 0;
    let mut tie = false;
    for (j, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = j;
            tie = false;
        } else if *v == values[best] {
            tie = true;
        }
    }
    (best, tie)
}

/// `U(f) = max_s f(s) + f(1)` on the path grid (whose last point is `s = 1`).
pub fn max_endpoint_weight(path: &KLPathSample) -> MaxEndpointEval {
    let (j, tie) = grid_argmax(&path.values);
    let s = path.grid[j];
    let end = *path.values.last().unwrap();
    let one = *path.grid.last().unwrap();
    let gradient = (0..path.coeffs.len()).map(|k| WienerBasis::h(k, s) + WienerBasis::h(k, one)).collect();
    MaxEndpointEval { value: path.values[j] + end, argmax_index: j, argmax: s, tie, gradient }
}

/// The max-plus-endpoint weight as a function of the first `modes`
/// coordinates, with paths evaluated on a fixed grid.
#[derive(Debug, Clone)]
pub struct MaxEndpointWeight {
    pub basis: WienerBasis,
    pub grid: Vec<f64>,
    table: Vec<Vec<f64>>,
}

impl MaxEndpointWeight {
    pub fn new(modes: usize, grid_points: usize) -> Self {
        let basis = WienerBasis::new(modes);
        let grid = WienerBasis::uniform_grid(grid_points);
        let table = basis.h_table(&grid);
        MaxEndpointWeight { basis, grid, table }
    }

    /// Path values on the grid, plus an optional additive tail path.
    pub fn path_values(&self, x: &[f64], tail: Option<&[f64]>) -> Vec<f64> {
        let mut v = match tail {
            Some(t) => t.to_vec(),
            None => vec![0.0; self.grid.len()],
        };
        for (k, c) in x.iter().enumerate() {
            if *c != 0.0 {
                for (vj, hj) in v.iter_mut().zip(&self.table[k]) {
                    *vj += c * hj;
                }
            }
        }
        v
    }

    /// Value and argmax index of the path `sum_k x_k h_k + tail`.
    pub fn eval_with_tail(&self, x: &[f64], tail: Option<&[f64]>) -> (f64, usize) {
        let v = self.path_values(x, tail);
        let (j, _) = grid_argmax(&v);
        (v[j] + v[v.len() - 1], j)
    }

    /// `h_k` on the evaluation grid.
    pub fn mode_values(&self, k: usize) -> &[f64] {
        &self.table[k]
    }

    /// H-frame gradient coordinate `k` for a maximizer at grid index `j`.
    pub fn gradient_coord(&self, k: usize, j: usize) -> f64 {
        self.table[k][j] + self.table[k][self.grid.len() - 1]
    }
}

impl ConvexWeight for MaxEndpointWeight {
    fn dim(&self) -> usize {
        self.basis.modes
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.eval_with_tail(x, None).0
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        let (_, j) = self.eval_with_tail(x, None);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = self.gradient_coord(k, j);
        }
    }
    fn value_and_subgradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let (v, j) = self.eval_with_tail(x, None);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = self.gradient_coord(k, j);
        }
        v
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        None
    }
    fn label(&self) -> String {
        "maxend".into()
    }
}

/// Vector field with components `phi_i` depending on the first `k` coordinates.
#[derive(Clone)]
pub enum CylindricalField {
    Components(Vec<FnRef>),
    /// `grad u` restricted to the first `k` coordinates.
    Gradient(FnRef, usize),
}

impl CylindricalField {
    pub fn k(&self) -> usize {
        match self {
            CylindricalField::Components(c) => c.len(),
            CylindricalField::Gradient(_, k) => *k,
        }
    }

    /// `(phi_i(x), d_i phi_i(x))` for `i < k`.
    pub fn component_and_partial(&self, x: &[f64]) -> Vec<(f64, f64)> {
        match self {
            CylindricalField::Components(c) => c.iter().enumerate().map(|(i, f)| (f.value(x), f.gradient(x)[i])).collect(),
            CylindricalField::Gradient(u, k) => {
                let n = x.len();
                let g = u.gradient(x);
                let h = u.hessian(x);
                (0..*k).map(|i| (g[i], h[i * n + i])).collect()
            }
        }
    }
}

/// `div_nu Phi = sum_i (d_i phi_i - phi_i d_i U - phi_i xi_i)`.
pub fn weighted_divergence(field: &CylindricalField, w: &dyn ConvexWeight, xi: &[f64]) -> f64 {
    let gu = w.subgradient(xi);
    field
        .component_and_partial(xi)
        .iter()
        .enumerate()
        .map(|(i, (p, dp))| dp - p * gu[i] - p * xi[i])
        .sum()
}

/// Monte Carlo estimate of `int <grad f, Phi> dnu + int f div_nu Phi dnu`
/// under the self-normalized weighted Gaussian; zero in expectation.
pub fn ibp_residual(f: &dyn SmoothFn, field: &CylindricalField, w: &dyn ConvexWeight, mc: &ISConfig) -> MCValue {
    let s = weighted_sample(w, mc);
    let col: Vec<f64> = s
        .points
        .iter()
        .map(|x| {
            let g = f.gradient(x);
            let cp = field.component_and_partial(x);
            let inner: f64 = cp.iter().enumerate().map(|(i, (p, _))| g[i] * p).sum();
            inner + f.value(x) * weighted_divergence(field, w, x)
        })
        .collect();
    let (m, se) = weighted_delta(&s.weights, &[col], |v| v[0]);
    MCValue { mean: m, std_error: se, paths_used: s.points.len(), bias_bound: 0.0 }
}

/// The constant field `e_i` on the first `k` coordinates.
pub fn constant_field(k: usize, i: usize) -> CylindricalField {
    let comps: Vec<FnRef> = (0..k)
        .map(|j| -> FnRef { Arc::new(crate::functions::Constant(if j == i { 1.0 } else { 0.0 })) })
        .collect();
    CylindricalField::Components(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Profile, Ridge};
    use crate::weight::Zero;

    #[test]
    fn cm_norm_examples() {
        assert!((cm_norm_sq(&[1.0]) - PI * PI / 4.0).abs() < 1e-12);
        assert!((cm_norm_sq(&[WienerBasis::eigenvalue(0).sqrt()]) - 1.0).abs() < 1e-15);
        assert_eq!(cm_norm_sq(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn single_mode_path() {
        let p = KLPathSample::from_coeffs(vec![1.0], vec![0.0, 0.3, 1.0]);
        for (s, v) in p.grid.iter().zip(&p.values) {
            assert!((v - 2.0 * SQRT_2 / PI * (PI * s / 2.0).sin()).abs() < 1e-15);
        }
        assert_eq!(p.values[0], 0.0);
    }

    #[test]
    fn energy_examples() {
        let (v, g) = energy_weight(&[1.0, 0.0]);
        assert_eq!(v, 1.0);
        assert!((g[0] - 4.0 / PI).abs() < 1e-15 && g[1] == 0.0);
        let w = EnergyWeight::new(3);
        let xi = [1.0 / WienerBasis::eigenvalue(0).sqrt(), 0.0, 0.0];
        assert!((w.value(&xi) - 1.0).abs() < 1e-14);
        assert!((w.subgradient(&xi)[0] - 4.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn ramp_paths() {
        let grid = WienerBasis::uniform_grid(11);
        let e = max_endpoint_weight(&KLPathSample::from_values(grid.clone(), grid.clone()));
        assert_eq!((e.argmax, e.value, e.tie), (1.0, 2.0, false));
        let neg: Vec<f64> = grid.iter().map(|s| -s).collect();
        let e = max_endpoint_weight(&KLPathSample::from_values(grid, neg));
        assert_eq!((e.argmax, e.value), (0.0, -1.0));
    }

    #[test]
    fn divergence_examples() {
        let xi = [0.7, -0.2];
        assert!((weighted_divergence(&constant_field(1, 0), &Zero { dim: 2 }, &xi) + 0.7).abs() < 1e-15);
        let w = EnergyWeight::new(2);
        let l = WienerBasis::eigenvalue(0);
        assert!((weighted_divergence(&constant_field(1, 0), &w, &xi) + 2.0 * l * 0.7 + 0.7).abs() < 1e-15);
    }

    #[test]
    fn ibp_linear_gaussian() {
        let f = Ridge::coordinate(Profile::Identity, 0);
        let r = ibp_residual(&f, &constant_field(1, 0), &Zero { dim: 1 }, &ISConfig { samples: 20_000, seed: 1 });
        assert!(r.agrees_with(0.0, 3.0, 0.0), "{r:?}");
    }
}
