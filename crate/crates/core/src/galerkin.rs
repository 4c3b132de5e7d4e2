//! Galerkin truncation of a weight on `m` coordinates to its first `n`.
//!
//! `psi_n(xi) = E U(xi, Y)` with the tail `Y` standard Gaussian on the
//! remaining `m - n` coordinates. The expectation is replaced by an average
//! over a fixed set of seeded tail draws, so `psi_n` is exactly convex and its
//! gradient `E_n grad U` keeps the Lipschitz constant of `grad U`.
//! `psi_n^eps` convolves with a polynomial bump supported in the unit ball.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functions::SmoothFn;
use crate::grid::{GridSolution, GridSpec};
use crate::quadrature::gauss_legendre;
use crate::rng;
use crate::sampling::{gaussian_points, ISConfig};
use crate::stats::{weighted_delta, MCValue};
use crate::weight::{ConvexWeight, Memoized, WeightRef};
use crate::wiener::{MaxEndpointWeight, WienerBasis};

#[derive(Clone)]
pub enum Base {
    /// Any weight over `m` coordinates.
    Coordinates(WeightRef),
    /// The max-plus-endpoint weight; tail paths are precomputed on its grid.
    MaxEndpoint(Arc<MaxEndpointWeight>),
}

impl Base {
    pub fn dim(&self) -> usize {
        match self {
            Base::Coordinates(w) => w.dim(),
            Base::MaxEndpoint(w) => w.dim(),
        }
    }

    pub fn grad_lipschitz(&self) -> Option<f64> {
        match self {
            Base::Coordinates(w) => w.grad_lipschitz(),
            Base::MaxEndpoint(_) => None,
        }
    }

    fn label(&self) -> String {
        match self {
            Base::Coordinates(w) => w.label(),
            Base::MaxEndpoint(w) => w.label(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TruncationConfig {
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig { mc_samples: 10_000, seed: 0 }
    }
}

/// Per-sample values and active gradients of the base at `(xi, tail_k)`.
pub struct TruncatedWeight {
    pub base: Base,
    pub n: usize,
    pub cfg: TruncationConfig,
    /// Analytic constant added to values for the part of the base discarded
    /// beyond its `m` coordinates (0 when unknown).
    pub discarded_tail: f64,
    tails: Vec<Vec<f64>>,
    tail_paths: Vec<Vec<f64>>,
}

impl TruncatedWeight {
    pub fn new(base: Base, n: usize, cfg: TruncationConfig) -> Result<Self> {
        let m = base.dim();
        if n == 0 || n > m {
            return Err(Error::Domain(format!("need 1 <= n <= {m}, got {n}")));
        }
        if cfg.mc_samples == 0 {
            return Err(Error::Domain("mc_samples must be positive".into()));
        }
        let mut r = rng::stream(cfg.seed, rng::tag_of("galerkin_tail"), n as u64);
        let tails: Vec<Vec<f64>> = (0..cfg.mc_samples).map(|_| (n..m).map(|_| r.sample(StandardNormal)).collect()).collect();
        let tail_paths = match &base {
            Base::MaxEndpoint(w) => tails
                .par_iter()
                .map(|t| {
                    let mut full = vec![0.0; m];
                    full[n..].copy_from_slice(t);
                    w.path_values(&full, None)
                })
                .collect(),
            Base::Coordinates(_) => Vec::new(),
        };
        Ok(TruncatedWeight { base, n, cfg, discarded_tail: 0.0, tails, tail_paths })
    }

    /// The Wiener energy weight on `m` modes; the mass `sum_{i > m} lambda_i`
    /// beyond the master truncation is added analytically.
    pub fn energy(m: usize, n: usize, cfg: TruncationConfig) -> Result<Self> {
        let mut t = TruncatedWeight::new(Base::Coordinates(Arc::new(crate::wiener::EnergyWeight::new(m))), n, cfg)?;
        t.discarded_tail = 0.5 - WienerBasis::new(m).eigenvalues().iter().sum::<f64>();
        Ok(t)
    }

    fn sample(&self, xi: &[f64], k: usize, g: &mut [f64]) -> f64 {
        match &self.base {
            Base::Coordinates(w) => {
                let mut full = Vec::with_capacity(w.dim());
                full.extend_from_slice(xi);
                full.extend_from_slice(&self.tails[k]);
                let mut gf = vec![0.0; full.len()];
                let v = w.value_and_subgradient(&full, &mut gf);
                g.copy_from_slice(&gf[..self.n]);
                v
            }
            Base::MaxEndpoint(w) => {
                let (v, j) = w.eval_with_tail(xi, Some(&self.tail_paths[k]));
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi = w.gradient_coord(i, j);
                }
                v
            }
        }
    }

    /// Values and gradients for every tail draw: `(values, grads[k][i])`.
    fn samples(&self, xi: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut vals = Vec::with_capacity(self.tails.len().max(1));
        let mut grads = Vec::with_capacity(vals.capacity());
        for k in 0..self.cfg.mc_samples {
            let mut g = vec![0.0; self.n];
            vals.push(self.sample(xi, k, &mut g) + self.discarded_tail);
            grads.push(g);
        }
        (vals, grads)
    }

    pub fn value_mc(&self, xi: &[f64]) -> MCValue {
        MCValue::from_samples(&self.samples(xi).0)
    }

    pub fn gradient_mc(&self, xi: &[f64]) -> Vec<MCValue> {
        let (_, g) = self.samples(xi);
        (0..self.n).map(|i| MCValue::from_samples(&g.iter().map(|v| v[i]).collect::<Vec<_>>())).collect()
    }
}

impl ConvexWeight for TruncatedWeight {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.n];
        self.value_and_subgradient(x, &mut g)
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        self.value_and_subgradient(x, g);
    }
    fn value_and_subgradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let k = self.cfg.mc_samples;
        let mut tmp = vec![0.0; self.n];
        let mut v = 0.0;
        g.fill(0.0);
        for s in 0..k {
            v += self.sample(x, s, &mut tmp);
            for (gi, ti) in g.iter_mut().zip(&tmp) {
                *gi += ti;
            }
        }
        g.iter_mut().for_each(|gi| *gi /= k as f64);
        v / k as f64 + self.discarded_tail
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        self.base.grad_lipschitz()
    }
    fn label(&self) -> String {
        format!("{}_n{}", self.base.label(), self.n)
    }
}

/// `psi_n(xi)` with its Monte Carlo standard error over tail draws.
pub fn conditional_expectation(base: &Base, n: usize, xi: &[f64], mc: TruncationConfig) -> Result<MCValue> {
    let t = TruncatedWeight::new(base.clone(), n, mc)?;
    let v = t.value_mc(xi);
    if !v.mean.is_finite() {
        return Err(Error::NonFinite(format!("conditional expectation at {xi:?}")));
    }
    Ok(v)
}

/// `D_i psi_n(xi) = E_n d_i U` per active coordinate.
pub fn psi_gradient(base: &Base, n: usize, xi: &[f64], mc: TruncationConfig) -> Result<Vec<MCValue>> {
    let t = TruncatedWeight::new(base.clone(), n, mc)?;
    Ok(t.gradient_mc(xi))
}

/// Bump `c (1 - |eta|^2)^4` on the unit ball, discretized by tensor
/// Gauss-Legendre nodes; weights normalized to sum to 1.
#[derive(Debug, Clone)]
pub struct BumpKernel {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl BumpKernel {
    pub fn new(dim: usize, per_axis: usize) -> Self {
        let (x, w) = gauss_legendre(per_axis);
        let total = per_axis.pow(dim as u32);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for idx in 0..total {
            let mut rem = idx;
            let mut eta = Vec::with_capacity(dim);
            let mut wt = 1.0;
            for _ in 0..dim {
                eta.push(x[rem % per_axis]);
                wt *= w[rem % per_axis];
                rem /= per_axis;
            }
            let r2: f64 = eta.iter().map(|v| v * v).sum();
            if r2 < 1.0 {
                nodes.push(eta);
                weights.push(wt * (1.0 - r2).powi(4));
            }
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|v| *v /= s);
        BumpKernel { nodes, weights }
    }

    /// `sum_k w_k |eta_k|^2`.
    pub fn second_moment(&self) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(e, w)| w * e.iter().map(|v| v * v).sum::<f64>()).sum()
    }
}

pub struct MollifiedWeight {
    pub inner: WeightRef,
    pub epsilon: f64,
    pub kernel: BumpKernel,
}

/// `psi^eps(xi) = sum_k w_k psi(xi - eps eta_k)`.
pub fn mollify(inner: WeightRef, epsilon: f64, kernel: BumpKernel) -> Result<MollifiedWeight> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if kernel.nodes.first().map(|e| e.len()) != Some(inner.dim()) {
        return Err(Error::Domain("kernel dimension differs from weight dimension".into()));
    }
    Ok(MollifiedWeight { inner, epsilon, kernel })
}

impl ConvexWeight for MollifiedWeight {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.value_and_subgradient(x, &mut g)
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        self.value_and_subgradient(x, g);
    }
    fn value_and_subgradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let n = x.len();
        let mut y = vec![0.0; n];
        let mut gk = vec![0.0; n];
        let mut v = 0.0;
        g.fill(0.0);
        for (eta, w) in self.kernel.nodes.iter().zip(&self.kernel.weights) {
            for i in 0..n {
                y[i] = x[i] - self.epsilon * eta[i];
            }
            v += w * self.inner.value_and_subgradient(&y, &mut gk);
            for i in 0..n {
                g[i] += w * gk[i];
            }
        }
        v
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        self.inner.grad_lipschitz()
    }
    fn label(&self) -> String {
        format!("{}_eps{}", self.inner.label(), self.epsilon)
    }
}

/// Mollified truncation `psi_n^{1/n}` behind a memo cache.
pub fn galerkin_ladder_weight(base: &Base, n: usize, mc: TruncationConfig, per_axis: usize) -> Result<Arc<Memoized>> {
    let t: WeightRef = Arc::new(TruncatedWeight::new(base.clone(), n, mc)?);
    let m = mollify(t, 1.0 / n as f64, BumpKernel::new(n, per_axis))?;
    Ok(Arc::new(Memoized::new(Arc::new(m))))
}

/// `psi_n^eps` tabulated on a lattice of spacing `h` (n <= 2): `psi_n` is
/// evaluated exactly at lattice points and convolved with the bump sampled on
/// the same lattice. Off-lattice points use multilinear interpolation, and
/// points outside the table are extended linearly from the nearest entry.
#[derive(Debug, Clone)]
pub struct LatticeWeight {
    pub n: usize,
    pub spacing: f64,
    pub epsilon: f64,
    half: usize,
    values: Vec<f64>,
    grads: Vec<f64>,
    label: String,
}

/// Upper envelope of lines `a_j x + b_j` with strictly increasing slopes,
/// queried at increasing `xs`. Returns the maximizing line per query.
fn upper_envelope(a: &[f64], b: &[f64], xs: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(64);
    // l2 is useless if l1 and l3 meet at or left of where l1 and l2 meet.
    let useless = |l1: usize, l2: usize, l3: usize| (b[l3] - b[l1]) * (a[l2] - a[l1]) >= (b[l2] - b[l1]) * (a[l3] - a[l1]);
    for j in 0..a.len() {
        while hull.len() >= 2 && useless(hull[hull.len() - 2], hull[hull.len() - 1], j) {
            hull.pop();
        }
        hull.push(j);
    }
    let mut out = Vec::with_capacity(xs.len());
    let mut p = 0;
    for &x in xs {
        while p + 1 < hull.len() && a[hull[p + 1]] * x + b[hull[p + 1]] >= a[hull[p]] * x + b[hull[p]] {
            p += 1;
        }
        out.push(hull[p]);
    }
    out
}

impl LatticeWeight {
    pub fn mollified(t: &TruncatedWeight, epsilon: f64, spacing: f64, radius: f64) -> Result<Self> {
        let n = t.n;
        if !(1..=2).contains(&n) {
            return Err(Error::Domain(format!("lattice tabulation needs n <= 2, got {n}")));
        }
        if !(epsilon > 0.0 && spacing > 0.0 && radius > 0.0) {
            return Err(Error::Domain("epsilon, spacing and radius must be positive".into()));
        }
        let r = (epsilon / spacing).ceil() as usize;
        let half = (radius / spacing).round() as usize;
        let raw_half = half + r;
        let raw_side = 2 * raw_half + 1;
        let axis: Vec<f64> = (0..raw_side).map(|i| (i as f64 - raw_half as f64) * spacing).collect();
        let rows = if n == 2 { raw_side } else { 1 };
        let (raw_v, raw_g) = Self::raw_table(t, &axis, rows)?;

        let mut offsets = Vec::new();
        let mut kw = Vec::new();
        let span = r as isize;
        let second: Vec<isize> = if n == 2 { (-span..=span).collect() } else { vec![0] };
        for &o2 in &second {
            for o1 in -span..=span {
                let e2 = ((o1 * o1 + o2 * o2) as f64) * (spacing / epsilon).powi(2);
                if e2 < 1.0 {
                    offsets.push((o1, o2));
                    kw.push((1.0 - e2).powi(4));
                }
            }
        }
        let ks: f64 = kw.iter().sum();
        kw.iter_mut().for_each(|v| *v /= ks);

        let side = 2 * half + 1;
        let out_rows = if n == 2 { side } else { 1 };
        let mut values = vec![0.0; side * out_rows];
        let mut grads = vec![0.0; side * out_rows * n];
        for i2 in 0..out_rows {
            for i1 in 0..side {
                let o = i2 * side + i1;
                for ((o1, o2), w) in offsets.iter().zip(&kw) {
                    let j1 = (i1 + r) as isize + o1;
                    let j2 = if n == 2 { (i2 + r) as isize + o2 } else { 0 };
                    let src = j2 as usize * raw_side + j1 as usize;
                    values[o] += w * raw_v[src];
                    for a in 0..n {
                        grads[o * n + a] += w * raw_g[src * n + a];
                    }
                }
            }
        }
        Ok(LatticeWeight { n, spacing, epsilon, half, values, grads, label: format!("{}_eps{}", t.label(), epsilon) })
    }

    /// `psi_n` and its gradient on the raw lattice, row-major in the first axis.
    fn raw_table(t: &TruncatedWeight, axis: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = t.n;
        let side = axis.len();
        let per_row: Vec<(Vec<f64>, Vec<f64>)> = (0..rows)
            .into_par_iter()
            .map(|i2| {
                let mut v = vec![0.0; side];
                let mut g = vec![0.0; side * n];
                match &t.base {
                    Base::MaxEndpoint(w) => {
                        let last = w.grid.len() - 1;
                        let h1 = w.mode_values(0);
                        let x2 = if n == 2 { axis[i2] } else { 0.0 };
                        let mut b = vec![0.0; w.grid.len()];
                        for path in &t.tail_paths {
                            b.copy_from_slice(path);
                            if n == 2 {
                                for (bj, hj) in b.iter_mut().zip(w.mode_values(1)) {
                                    *bj += x2 * hj;
                                }
                            }
                            let arg = upper_envelope(h1, &b, axis);
                            for (i1, &j) in arg.iter().enumerate() {
                                let x1 = axis[i1];
                                v[i1] += x1 * h1[j] + b[j] + x1 * h1[last] + b[last];
                                for a in 0..n {
                                    g[i1 * n + a] += w.gradient_coord(a, j);
                                }
                            }
                        }
                        let k = t.tail_paths.len() as f64;
                        v.iter_mut().for_each(|x| *x = *x / k + t.discarded_tail);
                        g.iter_mut().for_each(|x| *x /= k);
                    }
                    Base::Coordinates(_) => {
                        for i1 in 0..side {
                            let x: Vec<f64> = if n == 2 { vec![axis[i1], axis[i2]] } else { vec![axis[i1]] };
                            v[i1] = t.value_and_subgradient(&x, &mut g[i1 * n..(i1 + 1) * n]);
                        }
                    }
                }
                (v, g)
            })
            .collect();
        let mut values = Vec::with_capacity(side * rows);
        let mut grads = Vec::with_capacity(side * rows * n);
        for (v, g) in per_row {
            values.extend(v);
            grads.extend(g);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tabulated weight".into()));
        }
        Ok((values, grads))
    }

    pub fn radius(&self) -> f64 {
        self.half as f64 * self.spacing
    }

    fn lookup(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let n = self.n;
        let side = 2 * self.half + 1;
        let lim = self.radius();
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        let mut clamped = [0.0f64; 2];
        for a in 0..n {
            clamped[a] = x[a].clamp(-lim, lim);
            let t = clamped[a] / self.spacing + self.half as f64;
            let k = (t.floor().max(0.0) as usize).min(side - 2);
            base[a] = k;
            frac[a] = t - k as f64;
        }
        let stride = [1, side];
        let mut v = 0.0;
        g.fill(0.0);
        for corner in 0..(1usize << n) {
            let mut wgt = 1.0;
            let mut idx = 0;
            for a in 0..n {
                let bit = (corner >> a) & 1;
                wgt *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                idx += (base[a] + bit) * stride[a];
            }
            if wgt == 0.0 {
                continue;
            }
            v += wgt * self.values[idx];
            for a in 0..n {
                g[a] += wgt * self.grads[idx * n + a];
            }
        }
        for a in 0..n {
            v += g[a] * (x[a] - clamped[a]);
        }
        v
    }
}

impl ConvexWeight for LatticeWeight {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut g = [0.0; 2];
        self.lookup(x, &mut g[..self.n])
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        self.lookup(x, g);
    }
    fn value_and_subgradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        self.lookup(x, g)
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        None
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// `sum_i v_ii - sum_i (d_i psi_n^eps + xi_i) v_i`.
pub fn truncated_generator_apply(w: &dyn ConvexWeight, v: &dyn SmoothFn, xi: &[f64]) -> f64 {
    crate::grid::apply_generator(w, v, xi)
}

/// A grid solution as a cylindrical function of its first `dim` coordinates.
pub struct GridFn {
    pub sol: GridSolution,
}

impl GridFn {
    pub fn spec(&self) -> &GridSpec {
        &self.sol.spec
    }
}

impl SmoothFn for GridFn {
    fn active_dim(&self) -> usize {
        self.sol.spec.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.sol.interpolate(&x[..self.sol.spec.dim]).map(|t| t.0).unwrap_or(f64::NAN)
    }
    fn gradient_into(&self, x: &[f64], g: &mut [f64]) {
        g.fill(0.0);
        match self.sol.interpolate(&x[..self.sol.spec.dim]) {
            Some((_, gr, _)) => g[..gr.len()].copy_from_slice(&gr),
            None => g.fill(f64::NAN),
        }
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        let n = x.len();
        let d = self.sol.spec.dim;
        h.fill(0.0);
        match self.sol.interpolate(&x[..d]) {
            Some((_, _, hh)) => {
                for i in 0..d {
                    for j in 0..d {
                        h[i * n + j] = hh[i * d + j];
                    }
                }
            }
            None => h.fill(f64::NAN),
        }
    }
    fn sup_norm(&self) -> Option<f64> {
        None
    }
    fn label(&self) -> String {
        "grid".into()
    }
}

/// `max_x |lambda V - L_nu V - f - <grad U_full - grad U_trunc, grad V>|`
/// over `points` (full `m`-dimensional), where `L_nu` uses `U_full` and `V`
/// depends on the first `n = U_trunc.dim()` coordinates.
pub fn perturbation_residual(
    v: &dyn SmoothFn,
    u_full: &dyn ConvexWeight,
    u_trunc: &dyn ConvexWeight,
    lambda: f64,
    f: &dyn SmoothFn,
    points: &[Vec<f64>],
) -> f64 {
    let n = u_trunc.dim();
    points
        .par_iter()
        .map(|x| {
            let m = x.len();
            let gf = u_full.subgradient(x);
            let gt = u_trunc.subgradient(&x[..n]);
            let gv = v.gradient(x);
            let hv = v.hessian(x);
            let lv: f64 = (0..m).map(|i| hv[i * m + i] - (gf[i] + x[i]) * gv[i]).sum();
            let corr: f64 = (0..m).map(|i| (gf[i] - if i < n { gt[i] } else { 0.0 }) * gv[i]).sum();
            (lambda * v.value(x) - lv - f.value(x) - corr).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// `int |grad U_full - grad U_trunc|^2 dnu` under `nu ~ exp(-U_full) gamma_m`
/// by self-normalized importance sampling.
pub fn gradient_correction_norm(u_full: &dyn ConvexWeight, u_trunc: &dyn ConvexWeight, mc: &ISConfig) -> MCValue {
    let m = u_full.dim();
    let n = u_trunc.dim();
    let pts = gaussian_points(m, mc.samples, mc.seed);
    let evals: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|x| {
            let mut gf = vec![0.0; m];
            let uf = u_full.value_and_subgradient(x, &mut gf);
            let gt = u_trunc.subgradient(&x[..n]);
            let d: f64 = (0..m).map(|i| (gf[i] - if i < n { gt[i] } else { 0.0 }).powi(2)).sum();
            (uf, d)
        })
        .collect();
    let umin = evals.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = evals.iter().map(|e| (-(e.0 - umin)).exp()).collect();
    let col: Vec<f64> = evals.iter().map(|e| e.1).collect();
    let (mean, se) = weighted_delta(&w, &[col], |v| v[0]);
    MCValue { mean, std_error: se, paths_used: pts.len(), bias_bound: 0.0 }
}

/// Exact value of [`gradient_correction_norm`] for the energy weight with an
/// exact truncation: `sum_{n < i <= m} 4 lambda_i^2 / (1 + 2 lambda_i)`.
pub fn energy_gradient_correction(m: usize, n: usize) -> f64 {
    (n..m)
        .map(|k| {
            let l = WienerBasis::eigenvalue(k);
            4.0 * l * l / (1.0 + 2.0 * l)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Constant, Profile, Ridge};
    use crate::weight::{Linear, Quadratic};

    #[test]
    fn cylindrical_base_has_zero_error() {
        let base = Base::Coordinates(Arc::new(Quadratic::new(vec![1.0, 2.0, 0.0, 0.0])));
        let v = conditional_expectation(&base, 2, &[0.5, -1.0], TruncationConfig { mc_samples: 50, seed: 1 }).unwrap();
        assert_eq!(v.std_error, 0.0);
        assert!((v.mean - (0.125 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn linear_base() {
        let base = Base::Coordinates(Arc::new(Linear { a: vec![1.0, 0.0, 0.0], c: 0.0 }));
        let v = conditional_expectation(&base, 1, &[0.3], TruncationConfig { mc_samples: 10, seed: 2 }).unwrap();
        assert_eq!((v.mean, v.std_error), (0.3, 0.0));
        let g = psi_gradient(&base, 1, &[0.3], TruncationConfig { mc_samples: 10, seed: 2 }).unwrap();
        assert_eq!(g[0].mean, 1.0);
    }

    #[test]
    fn bump_kernel_moments() {
        let k = BumpKernel::new(1, 8);
        assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Degree-10 polynomial: 8-point Gauss-Legendre is exact.
        assert!((k.second_moment() - 1.0 / 11.0).abs() < 1e-13);
        let k2 = BumpKernel::new(2, 8);
        assert!(k2.nodes.iter().all(|e| e[0] * e[0] + e[1] * e[1] < 1.0));
    }

    #[test]
    fn mollified_square() {
        let sq: WeightRef = Arc::new(Quadratic::new(vec![2.0]));
        let k = BumpKernel::new(1, 8);
        let m2 = k.second_moment();
        let m = mollify(sq, 0.3, k).unwrap();
        for x in [-1.0, 0.0, 0.7] {
            assert!((m.value(&[x]) - (x * x + 0.09 * m2)).abs() < 1e-14);
        }
    }

    #[test]
    fn mollified_affine_is_unchanged() {
        let lin: WeightRef = Arc::new(Linear { a: vec![1.5, -0.5], c: 0.25 });
        let m = mollify(lin.clone(), 0.5, BumpKernel::new(2, 8)).unwrap();
        for x in [[0.1, 0.2], [-2.0, 3.0]] {
            assert!((m.value(&x) - lin.value(&x)).abs() < 1e-14);
        }
    }

    #[test]
    fn generator_examples() {
        let l1 = WienerBasis::eigenvalue(0);
        let q = Quadratic::new(vec![2.0 * l1, 2.0 * WienerBasis::eigenvalue(1)]);
        let xi = [0.4, -0.3];
        let v1 = Ridge::coordinate(Profile::Identity, 0);
        assert!((truncated_generator_apply(&q, &v1, &xi) + (2.0 * l1 * 0.4 + 0.4)).abs() < 1e-15);
        let v2 = Ridge::new(Profile::Square, vec![1.0], 0.0);
        assert!((truncated_generator_apply(&q, &v2, &xi) - (2.0 - (2.0 * l1 * 0.4 + 0.4) * 0.8)).abs() < 1e-15);
        assert_eq!(truncated_generator_apply(&q, &Constant(3.0), &xi), 0.0);
    }

    #[test]
    fn constant_solution_has_zero_perturbation_residual() {
        let q = Quadratic::new(vec![1.0, 1.0, 0.5]);
        let qt = Quadratic::new(vec![1.0]);
        let pts = vec![vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0]];
        assert_eq!(perturbation_residual(&Constant(2.0), &q, &qt, 1.5, &Constant(3.0), &pts), 0.0);
    }

    #[test]
    fn envelope_matches_brute_force() {
        let a: Vec<f64> = (0..50).map(|j| (j as f64 * 0.05).sin()).collect();
        let b: Vec<f64> = (0..50).map(|j| ((j * 7 % 13) as f64 * 0.3).cos()).collect();
        let xs: Vec<f64> = (0..40).map(|i| -4.0 + 0.2 * i as f64).collect();
        for (x, j) in xs.iter().zip(upper_envelope(&a, &b, &xs)) {
            let best = a.iter().zip(&b).map(|(ai, bi)| ai * x + bi).fold(f64::NEG_INFINITY, f64::max);
            assert!((a[j] * x + b[j] - best).abs() < 1e-14);
        }
    }

    #[test]
    fn lattice_tabulation_of_max_endpoint() {
        let w = Arc::new(MaxEndpointWeight::new(16, 257));
        let t = TruncatedWeight::new(Base::MaxEndpoint(w), 2, TruncationConfig { mc_samples: 8, seed: 4 }).unwrap();
        // Exact on lattice points without mollification width beyond one cell.
        let lat = LatticeWeight::mollified(&t, 1e-3, 0.25, 2.0).unwrap();
        for x in [[0.0, 0.0], [0.5, -1.25], [-2.0, 1.75]] {
            let mut g1 = [0.0; 2];
            let mut g2 = [0.0; 2];
            let v1 = lat.value_and_subgradient(&x, &mut g1);
            let v2 = t.value_and_subgradient(&x, &mut g2);
            assert!((v1 - v2).abs() < 1e-12, "{x:?}: {v1} vs {v2}");
            assert!((g1[0] - g2[0]).abs() < 1e-12 && (g1[1] - g2[1]).abs() < 1e-12);
        }
        // Mollified: within Lip * eps of the unmollified value, and convex
        // along a line.
        let eps = 0.5;
        let lat = LatticeWeight::mollified(&t, eps, 0.125, 2.0).unwrap();
        let lip = 2.0 * 2f64.sqrt() * 2.0;
        for x in [[0.0, 0.0], [0.5, -1.25]] {
            assert!((lat.value(&x) - t.value(&x)).abs() <= lip * eps);
        }
        for k in 1..15 {
            let x = -1.75 + 0.25 * k as f64;
            let mid = lat.value(&[x, 0.5]);
            let side = 0.5 * (lat.value(&[x - 0.25, 0.5]) + lat.value(&[x + 0.25, 0.5]));
            assert!(side - mid >= -1e-12);
        }
    }

    #[test]
    fn identical_weights_have_zero_correction() {
        let q = Quadratic::new(vec![1.0, 0.5]);
        let r = gradient_correction_norm(&q, &q, &ISConfig { samples: 200, seed: 3 });
        assert_eq!(r.mean, 0.0);
    }
}
