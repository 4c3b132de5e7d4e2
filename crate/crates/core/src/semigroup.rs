//! Monte Carlo semigroup and resolvent for `L_phi`.
//!
//! `L_phi` generates `dX = -(grad phi(X) + X) dt + sqrt(2) dW`, so
//! `T_t f(xi) = E f(X_t^xi)` and `R(lambda) f = int_0^inf e^{-lambda t} T_t f dt`.
//! Paths use Euler-Maruyama with one counter-based stream per
//! `(seed, coordinate, path)`; every starting point of a finite-difference
//! stencil is driven by the same noise (common random numbers).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{hermite_triple, SmoothFn};
use crate::quadrature::laplace_weights;
use crate::rng;
use crate::stats::MCValue;
use crate::weight::{dot, ConvexWeight};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Minimum resolvent truncation horizon; the horizon actually used is
    /// `max(t_max, 8, 8 / lambda)`.
    pub t_max: f64,
    pub quad_nodes: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig { dt: 1e-2, paths: 1000, seed: 0, t_max: 8.0, quad_nodes: 64 }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_max > 0.0) || self.dt > self.t_max {
            return Err(Error::Domain(format!("need 0 < dt <= t_max, got dt {} t_max {}", self.dt, self.t_max)));
        }
        if self.paths < 100 {
            return Err(Error::Domain(format!("paths must be >= 100, got {}", self.paths)));
        }
        if self.quad_nodes < 2 {
            return Err(Error::Domain("quad_nodes must be >= 2".into()));
        }
        Ok(())
    }

    /// Resolvent horizon for the smallest `lambda` served by one simulation.
    pub fn horizon(&self, lambda_min: f64) -> f64 {
        self.t_max.max(8.0).max(8.0 / lambda_min)
    }
}

/// Simulates one path from every start with shared noise, calling
/// `visit(slot, start, state)` at each recorded step (`record` sorted, step 0 allowed).
fn run_path<V>(w: &dyn ConvexWeight, starts: &[Vec<f64>], dt: f64, steps: usize, record: &[usize], seed: u64, path: u64, mut visit: V) -> Result<()>
where
    V: FnMut(usize, usize, &[f64]),
{
    let n = w.dim();
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|c| rng::stream(seed, c as u64, path)).collect();
    let mut xs: Vec<Vec<f64>> = starts.to_vec();
    let mut g = vec![0.0; n];
    let mut z = vec![0.0; n];
    let sd = (2.0 * dt).sqrt();
    let mut slot = 0;
    while slot < record.len() && record[slot] == 0 {
        for (s, x) in xs.iter().enumerate() {
            visit(slot, s, x);
        }
        slot += 1;
    }
    for step in 1..=steps {
        for (zc, r) in z.iter_mut().zip(rngs.iter_mut()) {
            *zc = sd * r.sample::<f64, _>(StandardNormal);
        }
        for x in xs.iter_mut() {
            w.subgradient_into(x, &mut g);
            for c in 0..n {
                x[c] += z[c] - (g[c] + x[c]) * dt;
            }
        }
        while slot < record.len() && record[slot] == step {
            for (s, x) in xs.iter().enumerate() {
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("path {path} diverged at step {step}")));
                }
                visit(slot, s, x);
            }
            slot += 1;
        }
    }
    Ok(())
}

fn check_start(w: &dyn ConvexWeight, xi: &[f64]) -> Result<()> {
    if xi.len() != w.dim() {
        return Err(Error::Domain(format!("start has {} coordinates, weight has {}", xi.len(), w.dim())));
    }
    Ok(())
}

/// Steps and step size reaching exactly `t` with steps no larger than `dt`.
fn step_plan(t: f64, dt: f64) -> (usize, f64) {
    if t == 0.0 {
        return (0, dt);
    }
    let k = (t / dt - 1e-9).ceil().max(1.0) as usize;
    (k, t / k as f64)
}

/// Euler-Maruyama terminal states `X_t` from `xi0`, one per path.
pub fn simulate_terminal(w: &dyn ConvexWeight, xi0: &[f64], t: f64, cfg: &DiffusionConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_start(w, xi0)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    let (steps, h) = step_plan(t, cfg.dt);
    let starts = vec![xi0.to_vec()];
    (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut out = Vec::new();
            run_path(w, &starts, h, steps, &[steps], cfg.seed, p, |_, _, x| out = x.to_vec())?;
            Ok(out)
        })
        .collect()
}

/// Per-path values `f(X_t^{start})` for every start, laid out `[start][path]`.
fn terminal_values(w: &dyn ConvexWeight, f: &dyn SmoothFn, starts: &[Vec<f64>], t: f64, cfg: &DiffusionConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    for s in starts {
        check_start(w, s)?;
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be > 0, got {t}")));
    }
    let (steps, h) = step_plan(t, cfg.dt);
    let per_path: Vec<Vec<f64>> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut out = vec![0.0; starts.len()];
            run_path(w, starts, h, steps, &[steps], cfg.seed, p, |_, s, x| out[s] = f.value(x))?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..starts.len()).map(|s| per_path.iter().map(|v| v[s]).collect()).collect())
}

/// `T_t f(xi)` by Monte Carlo.
pub fn semigroup_apply(w: &dyn ConvexWeight, f: &dyn SmoothFn, t: f64, xi: &[f64], cfg: &DiffusionConfig) -> Result<MCValue> {
    let v = terminal_values(w, f, &[xi.to_vec()], t, cfg)?;
    Ok(MCValue::from_samples(&v[0]))
}

/// Central differences of `T_t f` with common random numbers; `bias_bound`
/// is the Richardson discrepancy `|D_h - D_2h| / 3`.
pub fn semigroup_gradient(w: &dyn ConvexWeight, f: &dyn SmoothFn, t: f64, xi: &[f64], cfg: &DiffusionConfig, fd_step: f64) -> Result<Vec<MCValue>> {
    let st = Stencil::new(xi, fd_step, false);
    let v = terminal_values(w, f, &st.points, t, cfg)?;
    Ok((0..xi.len()).map(|i| st.gradient_component(&v, i)).collect())
}

/// Finite-difference stencil: centre, `+-h e_i`, `+-2h e_i`, and optionally
/// `+-h (e_i + e_j)` for the mixed second differences.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub points: Vec<Vec<f64>>,
    pub h: f64,
    n: usize,
    mixed: bool,
}

impl Stencil {
    pub fn new(xi: &[f64], h: f64, mixed: bool) -> Self {
        let n = xi.len();
        let mut points = vec![xi.to_vec()];
        for i in 0..n {
            for s in [1.0, -1.0, 2.0, -2.0] {
                let mut p = xi.to_vec();
                p[i] += s * h;
                points.push(p);
            }
        }
        if mixed {
            for i in 0..n {
                for j in (i + 1)..n {
                    for s in [1.0, -1.0] {
                        let mut p = xi.to_vec();
                        p[i] += s * h;
                        p[j] += s * h;
                        points.push(p);
                    }
                }
            }
        }
        Stencil { points, h, n, mixed }
    }

    fn axis(&self, i: usize, k: usize) -> usize {
        1 + 4 * i + k
    }

    fn pair(&self, i: usize, j: usize, plus: bool) -> usize {
        debug_assert!(self.mixed && i < j);
        let before: usize = (0..i).map(|a| self.n - 1 - a).sum();
        1 + 4 * self.n + 2 * (before + (j - i - 1)) + usize::from(!plus)
    }

    fn combo(vals: &[Vec<f64>], terms: &[(usize, f64)]) -> Vec<f64> {
        (0..vals[0].len()).map(|p| terms.iter().map(|&(s, c)| c * vals[s][p]).sum()).collect()
    }

    pub fn value(&self, vals: &[Vec<f64>]) -> MCValue {
        MCValue::from_samples(&vals[0])
    }

    /// Richardson-extrapolated first derivative along axis `i`.
    pub fn gradient_component(&self, vals: &[Vec<f64>], i: usize) -> MCValue {
        let h = self.h;
        let d1 = [(self.axis(i, 0), 0.5 / h), (self.axis(i, 1), -0.5 / h)];
        let d2 = [(self.axis(i, 2), 0.25 / h), (self.axis(i, 3), -0.25 / h)];
        let a = MCValue::from_samples(&Self::combo(vals, &d1));
        let b = MCValue::from_samples(&Self::combo(vals, &d2));
        let ex: Vec<(usize, f64)> = d1.iter().map(|(s, c)| (*s, c * 4.0 / 3.0)).chain(d2.iter().map(|(s, c)| (*s, -c / 3.0))).collect();
        MCValue::from_samples(&Self::combo(vals, &ex)).with_bias((a.mean - b.mean).abs() / 3.0)
    }

    /// Richardson-extrapolated second derivative along axis `i`.
    fn diagonal(&self, vals: &[Vec<f64>], i: usize) -> MCValue {
        let h2 = self.h * self.h;
        let d1 = [(self.axis(i, 0), 1.0 / h2), (0, -2.0 / h2), (self.axis(i, 1), 1.0 / h2)];
        let d2 = [(self.axis(i, 2), 0.25 / h2), (0, -0.5 / h2), (self.axis(i, 3), 0.25 / h2)];
        let a = MCValue::from_samples(&Self::combo(vals, &d1));
        let b = MCValue::from_samples(&Self::combo(vals, &d2));
        let ex: Vec<(usize, f64)> = d1.iter().map(|(s, c)| (*s, c * 4.0 / 3.0)).chain(d2.iter().map(|(s, c)| (*s, -c / 3.0))).collect();
        MCValue::from_samples(&Self::combo(vals, &ex)).with_bias((a.mean - b.mean).abs() / 3.0)
    }

    /// Full Hessian, row-major. Mixed entries use
    /// `[u(+h,+h) + u(-h,-h) - u(+-h e_i) - u(+-h e_j) + 2u] / (2h^2)`
    /// and carry the larger of the two diagonal allowances.
    pub fn hessian(&self, vals: &[Vec<f64>]) -> Vec<MCValue> {
        let n = self.n;
        let mut out = vec![MCValue::exact(0.0); n * n];
        for i in 0..n {
            out[i * n + i] = self.diagonal(vals, i);
        }
        if self.mixed {
            let h2 = self.h * self.h;
            for i in 0..n {
                for j in (i + 1)..n {
                    let c = 0.5 / h2;
                    let terms = [
                        (self.pair(i, j, true), c),
                        (self.pair(i, j, false), c),
                        (self.axis(i, 0), -c),
                        (self.axis(i, 1), -c),
                        (self.axis(j, 0), -c),
                        (self.axis(j, 1), -c),
                        (0, 2.0 * c),
                    ];
                    let bias = out[i * n + i].bias_bound.max(out[j * n + j].bias_bound);
                    let v = MCValue::from_samples(&Self::combo(vals, &terms)).with_bias(bias);
                    out[i * n + j] = v;
                    out[j * n + i] = v;
                }
            }
        }
        out
    }
}

/// Per-path resolvent quadratures for several functions, several `lambda`
/// and several starting points driven by the same noise.
#[derive(Debug, Clone)]
pub struct ResolventBatch {
    pub lambdas: Vec<f64>,
    pub horizon: f64,
    /// `samples[fn][lambda][start][path]`.
    pub samples: Vec<Vec<Vec<Vec<f64>>>>,
    /// Truncation tail allowance per `[fn][lambda]`.
    pub tails: Vec<Vec<f64>>,
}

/// Quadrature times: 0 plus `quad_nodes` geometric nodes on `[dt, horizon]`
/// snapped to the Euler grid. Returns step indices.
fn node_steps(cfg: &DiffusionConfig, horizon: f64) -> Vec<usize> {
    let total = (horizon / cfg.dt).round() as usize;
    let k = cfg.quad_nodes;
    let mut steps = vec![0usize];
    for j in 0..k {
        let t = cfg.dt * (horizon / cfg.dt).powf(j as f64 / (k - 1) as f64);
        steps.push(((t / cfg.dt).round() as usize).clamp(1, total));
    }
    steps.dedup();
    steps
}

pub fn resolvent_batch(
    w: &dyn ConvexWeight,
    fns: &[&dyn SmoothFn],
    lambdas: &[f64],
    starts: &[Vec<f64>],
    cfg: &DiffusionConfig,
) -> Result<ResolventBatch> {
    cfg.validate()?;
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambdas:?}")));
    }
    for s in starts {
        check_start(w, s)?;
    }
    let lmin = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let horizon = cfg.horizon(lmin);
    let steps = node_steps(cfg, horizon);
    let times: Vec<f64> = steps.iter().map(|s| *s as f64 * cfg.dt).collect();
    let qw: Vec<Vec<f64>> = lambdas.iter().map(|l| laplace_weights(&times, *l)).collect();
    let last_step = *steps.last().unwrap();
    let (nf, nl, ns) = (fns.len(), lambdas.len(), starts.len());
    // Per path: integrals [fn][lambda][start] then terminal values [fn][start].
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut acc = vec![0.0; nf * nl * ns];
            let mut term = vec![0.0; nf * ns];
            let last_slot = steps.len() - 1;
            run_path(w, starts, cfg.dt, last_step, &steps, cfg.seed, p, |slot, s, x| {
                for (fi, f) in fns.iter().enumerate() {
                    let v = f.value(x);
                    for li in 0..nl {
                        acc[(fi * nl + li) * ns + s] += qw[li][slot] * v;
                    }
                    if slot == last_slot {
                        term[fi * ns + s] = v;
                    }
                }
            })?;
            Ok((acc, term))
        })
        .collect::<Result<_>>()?;
    let mut samples = vec![vec![vec![vec![0.0; cfg.paths]; ns]; nl]; nf];
    for (p, (acc, _)) in per_path.iter().enumerate() {
        for fi in 0..nf {
            for li in 0..nl {
                for s in 0..ns {
                    samples[fi][li][s][p] = acc[(fi * nl + li) * ns + s];
                }
            }
        }
    }
    let mut tails = vec![vec![0.0; nl]; nf];
    for (fi, f) in fns.iter().enumerate() {
        // Bounded f: sup |f| e^{-lambda T} / lambda. Otherwise the largest
        // terminal mean over starts plus 3 SE stands in for sup |T_T f|.
        let level = match f.sup_norm() {
            Some(s) => s,
            None => (0..ns)
                .map(|s| {
                    let v: Vec<f64> = per_path.iter().map(|(_, t)| t[fi * ns + s]).collect();
                    let m = MCValue::from_samples(&v);
                    m.mean.abs() + 3.0 * m.std_error
                })
                .fold(0.0, f64::max),
        };
        for (li, l) in lambdas.iter().enumerate() {
            tails[fi][li] = level * (-l * horizon).exp() / l;
        }
    }
    Ok(ResolventBatch { lambdas: lambdas.to_vec(), horizon, samples, tails })
}

/// `R(lambda) f(xi)`; `bias_bound` is the truncation tail.
pub fn resolvent_apply(w: &dyn ConvexWeight, f: &dyn SmoothFn, lambda: f64, xi: &[f64], cfg: &DiffusionConfig) -> Result<MCValue> {
    let b = resolvent_batch(w, &[f], &[lambda], &[xi.to_vec()], cfg)?;
    Ok(MCValue::from_samples(&b.samples[0][0][0]).with_bias(b.tails[0][0]))
}

#[derive(Debug, Clone)]
pub struct ResolventDerivatives {
    pub value: MCValue,
    pub gradient: Vec<MCValue>,
    /// Row-major Hessian.
    pub hessian: Vec<MCValue>,
}

/// Value, gradient and Hessian of `R(lambda) f` at `xi` by common-random-number
/// finite differences with Richardson extrapolation.
pub fn resolvent_derivatives(w: &dyn ConvexWeight, f: &dyn SmoothFn, lambda: f64, xi: &[f64], cfg: &DiffusionConfig, fd_step: f64) -> Result<ResolventDerivatives> {
    let st = Stencil::new(xi, fd_step, true);
    let b = resolvent_batch(w, &[f], &[lambda], &st.points, cfg)?;
    Ok(derivatives_from(&st, &b.samples[0][0], b.tails[0][0], b.horizon))
}

/// Tail allowances: `tail` for the value, `tail / sqrt(T)` for first
/// derivatives (gradient bound of `T_t` for `t >= T`) and `2 tail / T` for
/// second derivatives.
pub fn derivatives_from(st: &Stencil, vals: &[Vec<f64>], tail: f64, horizon: f64) -> ResolventDerivatives {
    let mut value = st.value(vals);
    value.bias_bound += tail;
    let gradient = (0..st.n)
        .map(|i| {
            let mut g = st.gradient_component(vals, i);
            g.bias_bound += tail / horizon.sqrt();
            g
        })
        .collect();
    let hessian = st
        .hessian(vals)
        .into_iter()
        .map(|mut v| {
            v.bias_bound += 2.0 * tail / horizon;
            v
        })
        .collect();
    ResolventDerivatives { value, gradient, hessian }
}

/// Closed-form observables for the standard Ornstein-Uhlenbeck semigroup
/// (`phi = 0`).
#[derive(Debug, Clone)]
pub enum MehlerSpec {
    /// `<a, xi>`
    Linear(Vec<f64>),
    /// `cos <a, xi>`
    Cosine(Vec<f64>),
    /// `He_k(xi_1)`
    Hermite(usize),
}

pub fn mehler_oracle(spec: &MehlerSpec, t: f64, xi: &[f64]) -> f64 {
    let e = (-t).exp();
    match spec {
        MehlerSpec::Linear(a) => e * dot(a, xi),
        MehlerSpec::Cosine(a) => (-(1.0 - e * e) * dot(a, a) / 2.0).exp() * (e * dot(a, xi)).cos(),
        MehlerSpec::Hermite(k) => e.powi(*k as i32) * hermite_triple(*k, xi[0]).0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Constant, Profile, Ridge};
    use crate::weight::{Quadratic, Zero};

    fn cfg(paths: usize, dt: f64, seed: u64) -> DiffusionConfig {
        DiffusionConfig { dt, paths, seed, t_max: 8.0, quad_nodes: 64 }
    }

    #[test]
    fn zero_time_is_identity() {
        let x = simulate_terminal(&Zero { dim: 2 }, &[0.5, -1.0], 0.0, &cfg(100, 0.1, 1)).unwrap();
        assert!(x.iter().all(|p| p == &vec![0.5, -1.0]));
    }

    #[test]
    fn stationary_variance_of_quadratic_weight() {
        let x = simulate_terminal(&Quadratic::isotropic(1, 1.0), &[2.0], 6.0, &cfg(20_000, 0.005, 2)).unwrap();
        let v: Vec<f64> = x.iter().map(|p| p[0] * p[0]).collect();
        let m = MCValue::from_samples(&v);
        assert!(m.agrees_with(0.5, 4.0, 0.01), "{m:?}");
    }

    #[test]
    fn constants_have_zero_error() {
        let c = Constant(0.7);
        let v = semigroup_apply(&Zero { dim: 1 }, &c, 1.0, &[0.3], &cfg(100, 0.1, 3)).unwrap();
        assert_eq!((v.mean, v.std_error), (0.7, 0.0));
        let r = resolvent_apply(&Zero { dim: 1 }, &c, 2.0, &[0.3], &cfg(100, 0.1, 3)).unwrap();
        assert!(r.agrees_with(0.35, 0.0, 1e-14) && r.std_error == 0.0, "{r:?}");
        let d = resolvent_derivatives(&Zero { dim: 2 }, &c, 1.0, &[0.3, 0.1], &cfg(100, 0.1, 3), 0.05).unwrap();
        assert!(d.gradient.iter().chain(&d.hessian).all(|g| g.mean.abs() < 1e-9 && g.std_error < 1e-9));
    }

    #[test]
    fn bit_identical_across_thread_counts() {
        let f = Ridge::coordinate(Profile::Tanh, 0);
        let c = cfg(300, 0.05, 11);
        let a = semigroup_apply(&Quadratic::isotropic(2, 0.5), &f, 1.0, &[0.2, 0.1], &c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| semigroup_apply(&Quadratic::isotropic(2, 0.5), &f, 1.0, &[0.2, 0.1], &c).unwrap());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn mehler_examples() {
        assert_eq!(mehler_oracle(&MehlerSpec::Linear(vec![1.0]), 0.0, &[2.0]), 2.0);
        assert!((mehler_oracle(&MehlerSpec::Cosine(vec![1.0]), 60.0, &[3.0]) - (-0.5f64).exp()).abs() < 1e-15);
        assert!(mehler_oracle(&MehlerSpec::Hermite(2), 2f64.ln(), &[1.0]).abs() < 1e-15);
        assert!((mehler_oracle(&MehlerSpec::Cosine(vec![1.0]), 0.5, &[0.0]) - 0.7290).abs() < 1e-4);
    }

    #[test]
    fn linear_semigroup_matches_mehler() {
        let f = Ridge::coordinate(Profile::Identity, 0);
        let v = semigroup_apply(&Zero { dim: 1 }, &f, 1.0, &[2.0], &cfg(20_000, 0.01, 5)).unwrap();
        assert!(v.agrees_with(2.0 * (-1.0f64).exp(), 3.0, 0.01), "{v:?}");
        // CRN differences of a linear functional of a linear SDE are exact.
        let g = semigroup_gradient(&Zero { dim: 1 }, &f, 1.0, &[2.0], &cfg(100, 0.01, 5), 0.01).unwrap();
        assert!(g[0].std_error < 1e-9);
        assert!((g[0].mean - (1.0f64 - 0.01).powi(100)).abs() < 1e-9);
    }

    #[test]
    fn linear_resolvent() {
        let f = Ridge::coordinate(Profile::Identity, 0);
        let d = resolvent_derivatives(&Zero { dim: 1 }, &f, 1.0, &[1.5], &cfg(2000, 0.01, 6), 0.05).unwrap();
        assert!(d.value.agrees_with(0.75, 3.0, 0.01), "{:?}", d.value);
        assert!((d.gradient[0].mean - 0.5).abs() < 0.01, "{:?}", d.gradient[0]);
        assert!(d.hessian[0].mean.abs() < 1e-6);
    }

    #[test]
    fn stencil_pair_indexing() {
        let st = Stencil::new(&[0.0, 0.0, 0.0], 0.1, true);
        assert_eq!(st.points.len(), 1 + 12 + 6);
        assert_eq!(st.points[st.pair(0, 2, true)], vec![0.1, 0.0, 0.1]);
        assert_eq!(st.points[st.pair(1, 2, false)], vec![0.0, -0.1, -0.1]);
    }
}
