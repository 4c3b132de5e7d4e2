//! Grid oracles for `lambda u - L_phi u = f` and `v_t = L_phi v` in one and
//! two dimensions, where `L_phi u = Lap u - <grad phi + xi, grad u>`.
//!
//! The generator is discretized in flux form: with `Phi = phi + |xi|^2/2`,
//! neighbouring nodes `i, j` exchange at rate `exp((Phi_i - Phi_j)/2) / h^2`.
//! This is an M-matrix, reversible for the weights `exp(-Phi_i)`, and second
//! order accurate. Boxes are truncated at `[-R, R]^d`.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::SmoothFn;
use crate::weight::{dot, ConvexWeight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// No flux across the box boundary.
    Reflecting,
    /// Boundary nodes pinned to `f / lambda` (elliptic) or to `f` (parabolic).
    Absorbing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub radius: f64,
    pub mesh: f64,
    pub boundary: Boundary,
}

impl GridSpec {
    pub fn new(dim: usize, radius: f64, mesh: f64) -> Self {
        GridSpec { dim, radius, mesh, boundary: Boundary::Reflecting }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Domain(format!("grid dim must be 1 or 2, got {}", self.dim)));
        }
        if !(self.mesh > 0.0) || !(self.radius > 0.0) || self.mesh >= self.radius {
            return Err(Error::Domain(format!("need 0 < mesh < radius, got mesh {} radius {}", self.mesh, self.radius)));
        }
        Ok(())
    }

    /// Nodes on each side of the origin along one axis.
    pub fn half_count(&self) -> usize {
        (self.radius / self.mesh + 1e-9).floor() as usize
    }

    pub fn side(&self) -> usize {
        2 * self.half_count() + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of flat node `idx`, each entry in `0..side`.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        let s = self.side();
        [idx % s, idx / s]
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let m = self.multi_index(idx);
        let n = self.half_count() as f64;
        (0..self.dim).map(|d| (m[d] as f64 - n) * self.mesh).collect()
    }

    pub fn on_boundary(&self, idx: usize) -> bool {
        let m = self.multi_index(idx);
        (0..self.dim).any(|d| m[d] == 0 || m[d] == self.side() - 1)
    }

    /// `max_d |xi_d| <= R/2`: the region where boundary effects are negligible.
    pub fn is_interior(&self, idx: usize) -> bool {
        self.coords(idx).iter().all(|c| c.abs() <= 0.5 * self.radius + 1e-12)
    }

    /// Neighbours of `idx` as `(flat index, axis)`.
    fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let s = self.side();
        let m = self.multi_index(idx);
        let stride = [1, s];
        (0..self.dim).flat_map(move |d| {
            let lo = if m[d] > 0 { Some(idx - stride[d]) } else { None };
            let hi = if m[d] + 1 < s { Some(idx + stride[d]) } else { None };
            lo.into_iter().chain(hi)
        })
    }
}

#[derive(Debug, Clone)]
pub struct GridSolution {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    /// Central-difference gradients, `dim` entries per node.
    pub gradient: Vec<f64>,
    /// Central-difference Hessians, `dim * dim` entries per node.
    pub hessian: Vec<f64>,
    /// Right-hand side (elliptic) or initial datum (parabolic) at the nodes.
    pub rhs: Vec<f64>,
    /// Unnormalized discrete invariant weights `exp(-(Phi - min Phi))`.
    pub weights: Vec<f64>,
    /// Residual of the discrete equation in the weighted l2 norm.
    pub residual_norm: f64,
    pub time: Option<f64>,
}

/// Potential `Phi = phi + |xi|^2/2` at every node, evaluated in parallel.
fn potential(w: &dyn ConvexWeight, spec: &GridSpec) -> Vec<f64> {
    (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let x = spec.coords(i);
            w.value(&x) + 0.5 * dot(&x, &x)
        })
        .collect()
}

struct Operator {
    spec: GridSpec,
    phi: Vec<f64>,
    h2: f64,
}

impl Operator {
    fn new(w: &dyn ConvexWeight, spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        if w.dim() != spec.dim {
            return Err(Error::Domain(format!("weight has {} coordinates, grid has {}", w.dim(), spec.dim)));
        }
        let phi = potential(w, spec);
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("weight at node {:?}", spec.coords(i))));
        }
        Ok(Operator { spec: *spec, phi, h2: spec.mesh * spec.mesh })
    }

    fn rate(&self, i: usize, j: usize) -> f64 {
        ((self.phi[i] - self.phi[j]) * 0.5).exp() / self.h2
    }

    /// `(L_h u)_i`.
    fn apply(&self, u: &[f64], i: usize) -> f64 {
        self.spec.neighbours(i).map(|j| self.rate(i, j) * (u[j] - u[i])).sum()
    }

    fn weights(&self) -> Vec<f64> {
        let min = self.phi.iter().cloned().fold(f64::INFINITY, f64::min);
        self.phi.iter().map(|p| (-(p - min)).exp()).collect()
    }

    fn pinned(&self, i: usize) -> bool {
        self.spec.boundary == Boundary::Absorbing && self.spec.on_boundary(i)
    }

    /// Solves `(lambda - L_h) u = b` with pinned values taken from `fixed`.
    fn solve(&self, lambda: f64, b: &[f64], fixed: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        if self.spec.dim == 1 {
            self.solve_tridiagonal(lambda, b, fixed)
        } else {
            self.solve_krylov(lambda, b, fixed, guess)
        }
    }

    fn solve_tridiagonal(&self, lambda: f64, b: &[f64], fixed: &[f64]) -> Result<Vec<f64>> {
        let n = self.spec.len();
        let (mut lo, mut di, mut up, mut rhs) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], b.to_vec());
        for i in 0..n {
            if self.pinned(i) {
                di[i] = 1.0;
                rhs[i] = fixed[i];
                continue;
            }
            di[i] = lambda;
            if i > 0 {
                let k = self.rate(i, i - 1);
                di[i] += k;
                lo[i] = -k;
            }
            if i + 1 < n {
                let k = self.rate(i, i + 1);
                di[i] += k;
                up[i] = -k;
            }
        }
        for i in 1..n {
            let m = lo[i] / di[i - 1];
            di[i] -= m * up[i - 1];
            rhs[i] -= m * rhs[i - 1];
            if !(di[i].abs() > 0.0) {
                return Err(Error::Singular(format!("zero pivot at node {i}")));
            }
        }
        let mut u = vec![0.0; n];
        u[n - 1] = rhs[n - 1] / di[n - 1];
        for i in (0..n - 1).rev() {
            u[i] = (rhs[i] - up[i] * u[i + 1]) / di[i];
        }
        Ok(u)
    }

    /// Jacobi-preconditioned BiCGSTAB on `(lambda - L_h) u = b` over the
    /// free nodes. The matrix has row sums `lambda` and nonpositive
    /// off-diagonals, so `|u - u*|_inf <= |residual|_inf / lambda` and the
    /// unweighted residual controls the error uniformly on the box.
    fn solve_krylov(&self, lambda: f64, b: &[f64], fixed: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.spec.len();
        let free: Vec<bool> = (0..n).map(|i| !self.pinned(i)).collect();
        let mut diag = vec![1.0; n];
        let mut rhs = vec![0.0; n];
        let mut nbr: Vec<[(usize, f64); 4]> = vec![[(usize::MAX, 0.0); 4]; n];
        for i in 0..n {
            if !free[i] {
                continue;
            }
            let mut d = lambda;
            let mut r = b[i];
            for (slot, j) in self.spec.neighbours(i).enumerate() {
                let k = self.rate(i, j);
                d += k;
                if free[j] {
                    nbr[i][slot] = (j, k);
                } else {
                    r += k * fixed[j];
                }
            }
            diag[i] = d;
            rhs[i] = r;
        }
        // Jacobi-preconditioned operator: y = D^{-1} A x.
        let apply = |x: &[f64], y: &mut [f64]| {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| {
                if !free[i] {
                    *yi = 0.0;
                    return;
                }
                let mut s = diag[i] * x[i];
                for &(j, k) in &nbr[i] {
                    if j != usize::MAX {
                        s -= k * x[j];
                    }
                }
                *yi = s / diag[i];
            });
        };
        let dotp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let pb: Vec<f64> = (0..n).map(|i| if free[i] { rhs[i] / diag[i] } else { 0.0 }).collect();
        let mut x: Vec<f64> = match guess {
            Some(g) => (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect(),
            None => pb.clone(),
        };
        let mut t = vec![0.0; n];
        apply(&x, &mut t);
        let mut r: Vec<f64> = (0..n).map(|i| pb[i] - t[i]).collect();
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut s = vec![0.0; n];
        let max_iter = 20 * n + 1000;
        let bnorm = dotp(&pb, &pb).sqrt();
        for it in 0..=max_iter {
            let rn = dotp(&r, &r).sqrt();
            let xn = dotp(&x, &x).sqrt();
            // Roundoff floor of the preconditioned residual.
            let tol = 1e-13 * bnorm + 16.0 * f64::EPSILON * xn;
            if rn <= tol || rn == 0.0 {
                break;
            }
            if it == max_iter {
                return Err(Error::NonConvergence { iterations: it, residual: rn / bnorm.max(1e-300) });
            }
            let rho_new = dotp(&r0, &r);
            if rho_new == 0.0 || omega == 0.0 {
                return Err(Error::Singular("BiCGSTAB breakdown".into()));
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            apply(&p, &mut v);
            alpha = rho / dotp(&r0, &v);
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            apply(&s, &mut t);
            let tt = dotp(&t, &t);
            omega = if tt > 0.0 { dotp(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * p[i] + omega * s[i];
                r[i] = s[i] - omega * t[i];
            }
            if omega == 0.0 {
                break;
            }
        }
        Ok((0..n).map(|i| if free[i] { x[i] } else { fixed[i] }).collect())
    }

    /// Weighted l2 norm of `b - (lambda - L_h) u` over the free nodes.
    fn residual(&self, lambda: f64, u: &[f64], b: &[f64], m: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..self.spec.len() {
            den += m[i];
            if self.pinned(i) {
                continue;
            }
            let r = b[i] - lambda * u[i] + self.apply(u, i);
            num += m[i] * r * r;
        }
        (num / den).sqrt()
    }
}

/// Central differences in the interior, one-sided at the box edge.
fn derivatives(spec: &GridSpec, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = spec.dim;
    let s = spec.side();
    let h = spec.mesh;
    let stride = [1, s];
    let n = spec.len();
    let mut grad = vec![0.0; n * d];
    for i in 0..n {
        let m = spec.multi_index(i);
        for a in 0..d {
            let st = stride[a];
            grad[i * d + a] = if m[a] == 0 {
                (u[i + st] - u[i]) / h
            } else if m[a] == s - 1 {
                (u[i] - u[i - st]) / h
            } else {
                (u[i + st] - u[i - st]) / (2.0 * h)
            };
        }
    }
    let mut hess = vec![0.0; n * d * d];
    for i in 0..n {
        let m = spec.multi_index(i);
        // Clamp the stencil centre one node inside the box.
        let c: Vec<usize> = (0..d).map(|a| m[a].clamp(1, s - 2)).collect();
        let ci = c.iter().zip(&stride).map(|(ci, st)| ci * st).sum::<usize>();
        for a in 0..d {
            let sa = stride[a];
            hess[i * d * d + a * d + a] = (u[ci + sa] - 2.0 * u[ci] + u[ci - sa]) / (h * h);
            for b in (a + 1)..d {
                let sb = stride[b];
                let v = (u[ci + sa + sb] - u[ci + sa - sb] - u[ci - sa + sb] + u[ci - sa - sb]) / (4.0 * h * h);
                hess[i * d * d + a * d + b] = v;
                hess[i * d * d + b * d + a] = v;
            }
        }
    }
    (grad, hess)
}

fn build_solution(op: &Operator, values: Vec<f64>, rhs: Vec<f64>, residual_norm: f64, time: Option<f64>) -> GridSolution {
    let (gradient, hessian) = derivatives(&op.spec, &values);
    GridSolution { spec: op.spec, values, gradient, hessian, rhs, weights: op.weights(), residual_norm, time }
}

pub fn solve_elliptic_grid(
    w: &dyn ConvexWeight,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    lambda: f64,
    spec: &GridSpec,
) -> Result<GridSolution> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let op = Operator::new(w, spec)?;
    let b: Vec<f64> = (0..spec.len()).into_par_iter().map(|i| f(&spec.coords(i))).collect();
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("right-hand side at node {:?}", spec.coords(i))));
    }
    let fixed: Vec<f64> = b.iter().map(|v| v / lambda).collect();
    let u = op.solve(lambda, &b, &fixed, None)?;
    let res = op.residual(lambda, &u, &b, &op.weights());
    Ok(build_solution(&op, u, b, res, None))
}

/// Implicit Euler for `v_t = L_h v`, `v(0) = f`; returns `steps + 1` slices
/// including the initial datum.
pub fn solve_parabolic_grid(
    w: &dyn ConvexWeight,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    horizon: f64,
    steps: usize,
    spec: &GridSpec,
) -> Result<ParabolicSolution> {
    if !(horizon > 0.0) || steps == 0 {
        return Err(Error::Domain(format!("need horizon > 0 and steps > 0, got {horizon}, {steps}")));
    }
    let op = Operator::new(w, spec)?;
    let f0: Vec<f64> = (0..spec.len()).into_par_iter().map(|i| f(&spec.coords(i))).collect();
    let m = op.weights();
    let dt = horizon / steps as f64;
    let lam = 1.0 / dt;
    let mut slices = vec![build_solution(&op, f0.clone(), f0.clone(), 0.0, Some(0.0))];
    let mut v = f0.clone();
    for k in 1..=steps {
        let b: Vec<f64> = v.iter().map(|x| x * lam).collect();
        let next = op.solve(lam, &b, &f0, Some(&v))?;
        let res = op.residual(lam, &next, &b, &m) * dt;
        v = next;
        slices.push(build_solution(&op, v.clone(), f0.clone(), res, Some(k as f64 * dt)));
    }
    Ok(ParabolicSolution { slices })
}

#[derive(Debug, Clone)]
pub struct ParabolicSolution {
    pub slices: Vec<GridSolution>,
}

/// `max_{t > 0, interior xi} |v|^2 + t |grad v|^2`.
pub fn bernstein_monitor(sol: &ParabolicSolution) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for s in &sol.slices {
        let t = match s.time {
            Some(t) if t > 0.0 => t,
            _ => continue,
        };
        let d = s.spec.dim;
        for i in 0..s.spec.len() {
            if !s.spec.is_interior(i) {
                continue;
            }
            let g = &s.gradient[i * d..(i + 1) * d];
            best = best.max(s.values[i] * s.values[i] + t * dot(g, g));
        }
    }
    best
}

/// `L_phi u(xi) = sum_i u_ii - sum_i (phi_i + xi_i) u_i`.
pub fn apply_generator(w: &dyn ConvexWeight, u: &dyn SmoothFn, xi: &[f64]) -> f64 {
    let n = xi.len();
    let gw = w.subgradient(xi);
    let gu = u.gradient(xi);
    let hu = u.hessian(xi);
    (0..n).map(|i| hu[i * n + i] - (gw[i] + xi[i]) * gu[i]).sum()
}

/// `L_phi |xi|^2 = 2n - 2<grad phi, xi> - 2|xi|^2` at one point.
pub fn lyapunov_value(w: &dyn ConvexWeight, xi: &[f64]) -> f64 {
    2.0 * xi.len() as f64 - 2.0 * dot(&w.subgradient(xi), xi) - 2.0 * dot(xi, xi)
}

fn ball_samples(n: usize, radius: f64, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![vec![0.0; n]];
    for _ in 0..samples {
        let mut d: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let l = dot(&d, &d).sqrt().max(1e-300);
        let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
        d.iter_mut().for_each(|v| *v *= r / l);
        pts.push(d);
    }
    pts
}

/// Largest sampled value of `L_phi |xi|^2` over the ball of the given radius
/// (the origin is always included).
pub fn lyapunov_margin(w: &dyn ConvexWeight, radius: f64, samples: usize) -> f64 {
    ball_samples(w.dim(), radius, samples, 0x4c59_4150)
        .iter()
        .map(|x| lyapunov_value(w, x))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest excess of `L_phi |xi|^2` over `2n + 2|grad phi(0)||xi| - 2|xi|^2`
/// on the same samples; nonpositive for convex weights.
pub fn lyapunov_chain_violation(w: &dyn ConvexWeight, radius: f64, samples: usize) -> f64 {
    let n = w.dim();
    let g0 = dot(&w.subgradient(&vec![0.0; n]), &w.subgradient(&vec![0.0; n])).sqrt();
    ball_samples(n, radius, samples, 0x4c59_4150)
        .iter()
        .map(|x| {
            let r = dot(x, x).sqrt();
            lyapunov_value(w, x) - (2.0 * n as f64 + 2.0 * g0 * r - 2.0 * r * r)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Weighted L2 norms of a grid solution against its discrete invariant weights.
#[derive(Debug, Clone, Copy)]
pub struct GridNorms {
    pub u: f64,
    pub grad: f64,
    pub hess: f64,
    pub rhs: f64,
    /// `max |u|` over interior nodes.
    pub sup_u: f64,
    /// `max |grad u|` over interior nodes.
    pub sup_grad: f64,
}

impl GridSolution {
    pub fn norms(&self) -> GridNorms {
        let d = self.spec.dim;
        let (mut m0, mut nu, mut ng, mut nh, mut nf) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut su, mut sg) = (0.0f64, 0.0f64);
        for i in 0..self.spec.len() {
            let m = self.weights[i];
            let g = &self.gradient[i * d..(i + 1) * d];
            let h = &self.hessian[i * d * d..(i + 1) * d * d];
            m0 += m;
            nu += m * self.values[i] * self.values[i];
            ng += m * dot(g, g);
            nh += m * dot(h, h);
            nf += m * self.rhs[i] * self.rhs[i];
            if self.spec.is_interior(i) {
                su = su.max(self.values[i].abs());
                sg = sg.max(dot(g, g).sqrt());
            }
        }
        GridNorms {
            u: (nu / m0).sqrt(),
            grad: (ng / m0).sqrt(),
            hess: (nh / m0).sqrt(),
            rhs: (nf / m0).sqrt(),
            sup_u: su,
            sup_grad: sg,
        }
    }

    /// Multilinear interpolation of value, gradient and Hessian at `xi`;
    /// `None` outside the box.
    pub fn interpolate(&self, xi: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let d = self.spec.dim;
        let s = self.spec.side();
        let nh = self.spec.half_count() as f64;
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..d {
            let t = xi[a] / self.spec.mesh + nh;
            if !(t >= 0.0 && t <= (s - 1) as f64) {
                return None;
            }
            let k = (t.floor() as usize).min(s - 2);
            base[a] = k;
            frac[a] = t - k as f64;
        }
        let stride = [1, s];
        let mut v = 0.0;
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        for corner in 0..(1usize << d) {
            let mut wgt = 1.0;
            let mut idx = 0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                wgt *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                idx += (base[a] + bit) * stride[a];
            }
            v += wgt * self.values[idx];
            for a in 0..d {
                g[a] += wgt * self.gradient[idx * d + a];
            }
            for a in 0..d * d {
                h[a] += wgt * self.hessian[idx * d * d + a];
            }
        }
        Some((v, g, h))
    }

    /// CSV with columns `x1[,x2],value,grad1[,grad2]`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self.spec.dim;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let xs: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
        let gs: Vec<String> = (1..=d).map(|a| format!("grad{a}")).collect();
        writeln!(out, "{},value,{}", xs.join(","), gs.join(","))?;
        for i in 0..self.spec.len() {
            let c = self.spec.coords(i);
            let mut row: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
            row.push(format!("{}", self.values[i]));
            row.extend(self.gradient[i * d..(i + 1) * d].iter().map(|v| format!("{v}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Hermite, Ridge, Profile};
    use crate::weight::{Linear, Quadratic, Zero};

    #[test]
    fn generator_examples() {
        let sq = Ridge::new(Profile::Square, vec![1.0], 0.0);
        let lin = Ridge::coordinate(Profile::Identity, 0);
        assert_eq!(apply_generator(&Zero { dim: 1 }, &sq, &[1.0]), 0.0);
        assert_eq!(apply_generator(&Zero { dim: 1 }, &lin, &[3.0]), -3.0);
        assert_eq!(apply_generator(&Quadratic::new(vec![1.0]), &sq, &[1.0]), -2.0);
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov_margin(&Zero { dim: 2 }, 3.0, 100), 4.0);
        let lin = Linear { a: vec![2.0], c: 0.0 };
        let m = lyapunov_margin(&lin, 3.0, 20_000);
        assert!(m <= 4.0 && m > 4.0 - 1e-3, "{m}");
        assert!(lyapunov_chain_violation(&Quadratic::isotropic(3, 1.0), 4.0, 1000) <= 1e-12);
    }

    #[test]
    fn constants_are_equilibria() {
        for dim in [1, 2] {
            let spec = GridSpec::new(dim, 4.0, 0.25);
            let sol = solve_elliptic_grid(&Quadratic::isotropic(dim, 0.7), &|_| 3.0, 2.0, &spec).unwrap();
            assert!(sol.values.iter().all(|v| (v - 1.5).abs() < 1e-10), "dim {dim}");
        }
    }

    #[test]
    fn hermite_eigenfunction_1d() {
        let spec = GridSpec::new(1, 6.0, 1.0 / 64.0);
        let f = Hermite { k: 2, coord: 0 };
        let sol = solve_elliptic_grid(&Zero { dim: 1 }, &|x| f.value(x), 1.0, &spec).unwrap();
        for x in [-2.0, -0.5, 0.0, 1.25, 3.0] {
            let (v, _, _) = sol.interpolate(&[x]).unwrap();
            assert!((v - (x * x - 1.0) / 3.0).abs() < 1e-4 * (1.0 + x * x), "{x}: {v}");
        }
    }

    #[test]
    fn two_dim_matches_one_dim_for_separable_data() {
        let f = |x: &[f64]| x[0].tanh();
        let w1 = Quadratic::new(vec![0.5]);
        let w2 = Quadratic::new(vec![0.5, 0.5]);
        let s1 = solve_elliptic_grid(&w1, &f, 1.0, &GridSpec::new(1, 5.0, 0.125)).unwrap();
        let s2 = solve_elliptic_grid(&w2, &f, 1.0, &GridSpec::new(2, 5.0, 0.125)).unwrap();
        for x in [-1.0, 0.0, 0.5, 2.0] {
            let a = s1.interpolate(&[x]).unwrap().0;
            let b = s2.interpolate(&[x, 0.75]).unwrap().0;
            assert!((a - b).abs() < 1e-9, "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn absorbing_boundary_pins_values() {
        let mut spec = GridSpec::new(2, 3.0, 0.25);
        spec.boundary = Boundary::Absorbing;
        let sol = solve_elliptic_grid(&Zero { dim: 2 }, &|x| x[0] + 1.0, 2.0, &spec).unwrap();
        for i in 0..spec.len() {
            if spec.on_boundary(i) {
                assert_eq!(sol.values[i], (spec.coords(i)[0] + 1.0) / 2.0);
            }
        }
    }

    #[test]
    fn parabolic_linear_decay() {
        let spec = GridSpec::new(1, 6.0, 1.0 / 32.0);
        let sol = solve_parabolic_grid(&Zero { dim: 1 }, &|x| x[0], 1.0, 400, &spec).unwrap();
        let last = sol.slices.last().unwrap();
        let (v, _, _) = last.interpolate(&[1.0]).unwrap();
        // Implicit Euler: (1 + dt)^(-steps).
        let expect = (1.0f64 + 1.0 / 400.0).powi(-400);
        assert!((v - expect).abs() < 1e-3, "{v} vs {expect}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_elliptic_grid(&Zero { dim: 1 }, &|_| 1.0, 0.0, &GridSpec::new(1, 2.0, 0.5)).is_err());
        assert!(solve_elliptic_grid(&Zero { dim: 1 }, &|_| 1.0, 1.0, &GridSpec::new(1, 2.0, 3.0)).is_err());
        assert!(solve_elliptic_grid(&Zero { dim: 3 }, &|_| 1.0, 1.0, &GridSpec::new(3, 2.0, 0.5)).is_err());
    }
}
