//! Proximal points and Moreau envelopes of convex weights.
//!
//! The envelope is `f_a(x) = min_h f(x + h) + |h|^2 / (2a)` and its minimizer
//! `P(x, a)` gives the gradient `grad f_a(x) = -P(x, a) / a`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::weight::{dot, norm, ConvexWeight, WeightRef};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Serialize)]
pub struct ProxResult {
    /// The proximal displacement `h* = P(x, alpha)`.
    pub minimizer: Vec<f64>,
    pub envelope: f64,
    /// `-h* / alpha`.
    pub gradient: Vec<f64>,
    pub iterations: usize,
    /// First-order optimality residual; `alpha * residual` bounds the
    /// distance to the true minimizer.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ProxOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        ProxOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

fn finish(w: &dyn ConvexWeight, x: &[f64], alpha: f64, h: Vec<f64>, iterations: usize, residual: f64) -> ProxResult {
    let y: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
    let envelope = w.value(&y) + dot(&h, &h) / (2.0 * alpha);
    let gradient = h.iter().map(|v| -v / alpha).collect();
    ProxResult { minimizer: h, envelope, gradient, iterations, residual }
}

pub fn prox_point(w: &dyn ConvexWeight, x: &[f64], alpha: f64, tol: f64) -> Result<ProxResult> {
    prox_point_with(w, x, alpha, &ProxOptions { tol, ..ProxOptions::default() })
}

pub fn prox_point_with(w: &dyn ConvexWeight, x: &[f64], alpha: f64, opts: &ProxOptions) -> Result<ProxResult> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("tol must be positive, got {}", opts.tol)));
    }
    if x.len() != w.dim() {
        return Err(Error::Domain(format!("point has {} coordinates, weight has {}", x.len(), w.dim())));
    }
    match w.grad_lipschitz() {
        Some(l) => gradient_descent(w, x, alpha, l, opts),
        None => bundle(w, x, alpha, opts),
    }
}

fn gradient_descent(w: &dyn ConvexWeight, x: &[f64], alpha: f64, lip: f64, opts: &ProxOptions) -> Result<ProxResult> {
    let n = x.len();
    let step = alpha / (1.0 + alpha * lip);
    let mut h = vec![0.0; n];
    let mut y = x.to_vec();
    let mut g = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 0..=opts.max_iter {
        w.subgradient_into(&y, &mut g);
        for i in 0..n {
            g[i] += h[i] / alpha;
        }
        residual = norm(&g);
        if !residual.is_finite() {
            return Err(Error::NonFinite(format!("prox gradient at iteration {it}")));
        }
        if residual <= opts.tol {
            return Ok(finish(w, x, alpha, h, it, residual));
        }
        for i in 0..n {
            h[i] -= step * g[i];
            y[i] = x[i] + h[i];
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual })
}

struct Cut {
    y: Vec<f64>,
    fy: f64,
    g: Vec<f64>,
    /// `f(x + y) - <g, y>`, so the cut is `h -> c + <g, h>`.
    c: f64,
}

const MAX_CUTS: usize = 64;

/// Cutting-plane model of `h -> f(x + h)` plus the exact quadratic term.
/// The model minimizer comes from the dual QP over the simplex; the duality
/// gap `f(x + h) - sum_j theta_j (c_j + <g_j, h>)` certifies the iterate.
/// If the minimizer stops moving before the gap reaches `tol`, the iterate is
/// returned with its roundoff-limited residual.
fn bundle(w: &dyn ConvexWeight, x: &[f64], alpha: f64, opts: &ProxOptions) -> Result<ProxResult> {
    let n = x.len();
    let mut cuts: Vec<Cut> = Vec::new();
    let mut theta: Vec<f64> = Vec::new();
    let mut gram: Vec<Vec<f64>> = Vec::new();
    let mut h = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let eps = f64::EPSILON;
    let mut last_h = vec![f64::NAN; n];
    let mut stalls = 0;
    for it in 0..=opts.max_iter {
        let y: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
        let mut g = vec![0.0; n];
        let fy = w.value_and_subgradient(&y, &mut g);
        if !fy.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("weight oracle at iteration {it}")));
        }
        if !cuts.is_empty() {
            let mut agg = 0.0;
            let mut scale = fy.abs();
            for (t, cut) in theta.iter().zip(&cuts) {
                agg += t * (cut.c + dot(&cut.g, &h));
                scale += t * (cut.fy.abs() + norm(&cut.g) * (norm(&cut.y) + norm(&h)));
            }
            let floor = 16.0 * eps * (scale + 1.0);
            let gap = (fy - agg - floor).max(0.0);
            residual = (2.0 * gap / alpha).sqrt();
            if residual <= opts.tol {
                return Ok(finish(w, x, alpha, h, it, residual));
            }
            // New cuts no longer move the model minimizer: the gap is at
            // the rounding level of the cut values.
            stalls = if h == last_h { stalls + 1 } else { 0 };
            if stalls >= 3 {
                return Ok(finish(w, x, alpha, h, it, residual));
            }
            last_h.copy_from_slice(&h);
        }
        let c = fy - dot(&g, &h);
        if let Some(j) = cuts.iter().position(|cut| cut.g == g) {
            // Same linear piece seen again: keep the tighter constant.
            if c > cuts[j].c {
                cuts[j] = Cut { y: h.clone(), fy, g, c };
            }
        } else {
            if cuts.len() == MAX_CUTS {
                // Drop the inactive cut with the largest linearization error at h.
                let drop = (0..cuts.len())
                    .filter(|&j| theta[j] == 0.0)
                    .max_by(|&a, &b| {
                        let ea = fy - cuts[a].c - dot(&cuts[a].g, &h);
                        let eb = fy - cuts[b].c - dot(&cuts[b].g, &h);
                        ea.total_cmp(&eb)
                    })
                    .unwrap_or(0);
                let t = theta.remove(drop);
                cuts.remove(drop);
                gram.remove(drop);
                for row in gram.iter_mut() {
                    row.remove(drop);
                }
                if t > 0.0 {
                    let s: f64 = theta.iter().sum();
                    theta.iter_mut().for_each(|v| *v /= s);
                }
            }
            let row: Vec<f64> = cuts.iter().map(|cut| dot(&cut.g, &g)).collect();
            for (r, v) in gram.iter_mut().zip(&row) {
                r.push(*v);
            }
            let mut new_row = row;
            new_row.push(dot(&g, &g));
            gram.push(new_row);
            cuts.push(Cut { y: h.clone(), fy, g, c });
            theta.push(if theta.is_empty() { 1.0 } else { 0.0 });
        }
        let cs: Vec<f64> = cuts.iter().map(|c| c.c).collect();
        simplex_qp(&gram, &cs, alpha, &mut theta);
        h.fill(0.0);
        for (t, cut) in theta.iter().zip(&cuts) {
            for i in 0..n {
                h[i] -= alpha * t * cut.g[i];
            }
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual })
}

/// Minimizes `alpha/2 theta' K theta - c' theta` over the simplex by
/// maximal-violating-pair updates, warm-started from `theta`.
fn simplex_qp(k: &[Vec<f64>], c: &[f64], alpha: f64, theta: &mut [f64]) {
    let m = c.len();
    let mut grad: Vec<f64> = (0..m)
        .map(|i| alpha * (0..m).map(|j| k[i][j] * theta[j]).sum::<f64>() - c[i])
        .collect();
    let scale = 1.0 + c.iter().fold(0.0f64, |a, v| a.max(v.abs())) + alpha * k.iter().enumerate().fold(0.0f64, |a, (i, r)| a.max(r[i]));
    for _ in 0..50 * m + 1000 {
        let mut lo = 0;
        for i in 1..m {
            if grad[i] < grad[lo] {
                lo = i;
            }
        }
        let mut hi = usize::MAX;
        for j in 0..m {
            if theta[j] > 0.0 && (hi == usize::MAX || grad[j] > grad[hi]) {
                hi = j;
            }
        }
        if hi == usize::MAX || hi == lo || grad[hi] - grad[lo] <= 1e-15 * scale {
            break;
        }
        let curv = alpha * (k[lo][lo] + k[hi][hi] - 2.0 * k[lo][hi]);
        let mut d = if curv > 0.0 { (grad[hi] - grad[lo]) / curv } else { theta[hi] };
        if d >= theta[hi] {
            d = theta[hi];
            theta[hi] = 0.0;
        } else {
            theta[hi] -= d;
        }
        theta[lo] += d;
        for i in 0..m {
            grad[i] += alpha * d * (k[i][lo] - k[i][hi]);
        }
    }
    polish_active_set(k, c, alpha, theta);
    // Pairwise updates drift off the simplex by rounding over many sweeps,
    // which would bias the duality gap.
    let s: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|v| *v /= s);
}

fn qp_objective(k: &[Vec<f64>], c: &[f64], alpha: f64, theta: &[f64]) -> f64 {
    let m = c.len();
    (0..m).map(|i| theta[i] * (0.5 * alpha * (0..m).map(|j| k[i][j] * theta[j]).sum::<f64>() - c[i])).sum()
}

/// Solves the equality-constrained QP on the support of `theta` exactly.
/// Pairwise updates converge slowly when several cuts are active at a
/// vertex; the polished point is kept only if it is feasible and no worse.
fn polish_active_set(k: &[Vec<f64>], c: &[f64], alpha: f64, theta: &mut [f64]) {
    let act: Vec<usize> = (0..c.len()).filter(|&j| theta[j] > 0.0).collect();
    let a = act.len();
    if a < 2 {
        return;
    }
    // [alpha K_AA 1; 1' 0] [theta_A; -mu] = [c_A; 1]
    let mut m = vec![vec![0.0; a + 2]; a + 1];
    for (r, &i) in act.iter().enumerate() {
        for (q, &j) in act.iter().enumerate() {
            m[r][q] = alpha * k[i][j];
        }
        m[r][a] = 1.0;
        m[r][a + 1] = c[i];
    }
    for q in 0..a {
        m[a][q] = 1.0;
    }
    m[a][a + 1] = 1.0;
    let scale = m.iter().flat_map(|r| r[..=a].iter()).fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..=a {
        let piv = (col..=a).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        if m[piv][col].abs() <= 1e-12 * scale {
            return;
        }
        m.swap(col, piv);
        for r in 0..=a {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for q in col..a + 2 {
                        m[r][q] -= f * m[col][q];
                    }
                }
            }
        }
    }
    let sol: Vec<f64> = (0..a).map(|r| m[r][a + 1] / m[r][r]).collect();
    if sol.iter().any(|v| !(*v >= 0.0)) {
        return;
    }
    let mut cand = theta.to_vec();
    for (&i, v) in act.iter().zip(&sol) {
        cand[i] = *v;
    }
    if qp_objective(k, c, alpha, &cand) <= qp_objective(k, c, alpha, theta) {
        theta.copy_from_slice(&cand);
    }
}

pub fn moreau_envelope(w: &dyn ConvexWeight, x: &[f64], alpha: f64, tol: f64) -> Result<f64> {
    Ok(prox_point(w, x, alpha, tol)?.envelope)
}

pub fn envelope_gradient(w: &dyn ConvexWeight, x: &[f64], alpha: f64, tol: f64) -> Result<Vec<f64>> {
    Ok(prox_point(w, x, alpha, tol)?.gradient)
}

/// Hessian of the envelope by central differences of its gradient.
pub fn envelope_hessian_fd(w: &dyn ConvexWeight, x: &[f64], alpha: f64, tol: f64, step: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let mut hess = vec![0.0; n * n];
    let mut p = x.to_vec();
    for j in 0..n {
        p[j] = x[j] + step;
        let gp = envelope_gradient(w, &p, alpha, tol)?;
        p[j] = x[j] - step;
        let gm = envelope_gradient(w, &p, alpha, tol)?;
        p[j] = x[j];
        for i in 0..n {
            hess[i * n + j] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Ok(hess)
}

/// Worst margin of the variational inequality
/// `f(x + p) <= f(x + h) + <p, h - p> / alpha` over the probes `h`.
/// Nonnegative iff `candidate = p` certifies as the proximal point on the probe set.
pub fn check_optimality(w: &dyn ConvexWeight, x: &[f64], alpha: f64, candidate: &[f64], probes: &[Vec<f64>]) -> f64 {
    let xp: Vec<f64> = x.iter().zip(candidate).map(|(a, b)| a + b).collect();
    let fp = w.value(&xp);
    probes
        .iter()
        .map(|h| {
            let xh: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + b).collect();
            let inner: f64 = candidate.iter().zip(h).map(|(p, h)| p * (h - p)).sum();
            w.value(&xh) + inner / alpha - fp
        })
        .fold(f64::INFINITY, f64::min)
}

/// Tangent minorant at `x0`: slope is the oracle subgradient and intercept
/// the value, so `x -> <slope, x - x0> + intercept` lies below the weight.
pub fn affine_minorant(w: &dyn ConvexWeight, x0: &[f64]) -> (Vec<f64>, f64) {
    let mut g = vec![0.0; x0.len()];
    let v = w.value_and_subgradient(x0, &mut g);
    (g, v)
}

/// The Moreau envelope of a weight, itself a weight with `1/alpha`-Lipschitz
/// gradient. Oracle values are NaN if the inner solve fails.
pub struct MoreauEnvelope {
    pub inner: WeightRef,
    pub alpha: f64,
    pub tol: f64,
}

impl ConvexWeight for MoreauEnvelope {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        moreau_envelope(&*self.inner, x, self.alpha, self.tol).unwrap_or(f64::NAN)
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        match envelope_gradient(&*self.inner, x, self.alpha, self.tol) {
            Ok(v) => g.copy_from_slice(&v),
            Err(_) => g.fill(f64::NAN),
        }
    }
    fn value_and_subgradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        match prox_point(&*self.inner, x, self.alpha, self.tol) {
            Ok(r) => {
                g.copy_from_slice(&r.gradient);
                r.envelope
            }
            Err(_) => {
                g.fill(f64::NAN);
                f64::NAN
            }
        }
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        Some(1.0 / self.alpha)
    }
    fn label(&self) -> String {
        format!("moreau({})", self.inner.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weight::{Huber, L1, MaxAffine, Quadratic, Zero};

    #[test]
    fn quadratic_closed_form() {
        let w = Quadratic::new(vec![1.0]);
        let r = prox_point(&w, &[1.0], 1.0, 1e-10).unwrap();
        assert!((r.minimizer[0] + 0.5).abs() < 1e-10);
        assert!((r.envelope - 0.25).abs() < 1e-12);
        assert_eq!(r.gradient[0], -r.minimizer[0] / 1.0);
    }

    #[test]
    fn abs_closed_form() {
        let w = L1 { dim: 1, scale: 1.0 };
        let r = prox_point(&w, &[2.0], 1.0, 1e-10).unwrap();
        assert!((r.minimizer[0] + 1.0).abs() < 1e-12);
        assert!((r.envelope - 1.5).abs() < 1e-12);
        let r = prox_point(&w, &[0.5], 1.0, 1e-10).unwrap();
        assert!((r.envelope - 0.125).abs() < 1e-12);
    }

    #[test]
    fn zero_weight() {
        let r = prox_point(&Zero { dim: 2 }, &[3.0, -1.0], 0.7, 1e-10).unwrap();
        assert_eq!(r.minimizer, vec![0.0, 0.0]);
        assert_eq!(r.envelope, 0.0);
    }

    #[test]
    fn bad_alpha() {
        assert!(matches!(prox_point(&Zero { dim: 1 }, &[0.0], 0.0, 1e-8), Err(Error::Domain(_))));
    }

    #[test]
    fn budget_exhaustion_reports_residual() {
        let w = Huber { dim: 1, delta: 1e-6 };
        let opts = ProxOptions { tol: 1e-12, max_iter: 3 };
        match prox_point_with(&w, &[5.0], 1.0, &opts) {
            Err(Error::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn max_affine_in_two_dims() {
        let w = MaxAffine {
            slopes: vec![vec![1.0, 0.0], vec![-1.0, 0.5], vec![0.0, -1.0]],
            intercepts: vec![0.0, 0.2, -0.1],
        };
        let x = [0.4, 0.3];
        let r = prox_point(&w, &x, 0.8, 1e-9).unwrap();
        let probes: Vec<Vec<f64>> = (0..50)
            .map(|k| {
                let a = k as f64 * 0.37;
                vec![a.cos() * (1.0 + 0.01 * k as f64), a.sin()]
            })
            .collect();
        assert!(check_optimality(&w, &x, 0.8, &r.minimizer, &probes) >= -1e-8);
    }

    #[test]
    fn certificate_rejects_wrong_candidate() {
        let w = Quadratic::new(vec![1.0]);
        assert!(check_optimality(&w, &[1.0], 1.0, &[0.0], &[vec![-0.5]]) < 0.0);
        assert!(check_optimality(&w, &[1.0], 1.0, &[-0.5], &[vec![-1.0], vec![0.0], vec![1.0]]) >= 0.0);
    }

    #[test]
    fn minorant_is_tangent() {
        let w = Quadratic::new(vec![2.0]);
        assert_eq!(affine_minorant(&w, &[1.0]), (vec![2.0], 1.0));
        assert_eq!(affine_minorant(&L1 { dim: 1, scale: 1.0 }, &[0.0]), (vec![0.0], 0.0));
    }

    #[test]
    fn envelope_of_abs_is_huber() {
        let e = MoreauEnvelope { inner: std::sync::Arc::new(L1 { dim: 1, scale: 1.0 }), alpha: 1.0, tol: 1e-10 };
        let h = Huber { dim: 1, delta: 1.0 };
        for x in [-3.0, -0.4, 0.0, 0.9, 2.5] {
            assert!((e.value(&[x]) - h.value(&[x])).abs() < 1e-12);
        }
    }
}
