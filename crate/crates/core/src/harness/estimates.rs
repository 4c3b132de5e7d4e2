//! Resolvent estimate rows: grid oracle for `n <= grid.max_dim`, nested
//! Monte Carlo above it, the weak-solution identity, the strong-solution
//! ladder for the max-endpoint weight and the dimension probe.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rand::Rng;

use super::config::{ExperimentConfig, WeightKind, WeightSpec};
use super::report::{EstimateRow, Quantity, RowKey};
use super::{realize, Realized};
use crate::error::Result;
use crate::functions::{named_test_function, FnRef, Profile, Ridge, SmoothFn};
use crate::grid::{solve_elliptic_grid, GridSolution, GridSpec};
use crate::rng;
use crate::sampling::gaussian_points;
use crate::semigroup::{derivatives_from, resolvent_batch, Stencil};
use crate::stats::{ls_slope, weighted_delta};
use crate::weight::{dot, ConvexWeight};
use crate::wiener::MaxEndpointWeight;

/// Relative roundoff floor added to every grid allowance.
const ROUNDOFF: f64 = 1e-12;

const RATIO_QUANTITIES: [Quantity; 5] =
    [Quantity::L2Ratio, Quantity::GradRatio, Quantity::HessRatio, Quantity::SupRatio, Quantity::GradSupRatio];

/// `(1/lambda, 1/sqrt(lambda), sqrt 2, 1/lambda, sqrt(pi/lambda))`.
pub fn ratio_bounds(lambda: f64) -> [f64; 5] {
    [1.0 / lambda, 1.0 / lambda.sqrt(), SQRT_2, 1.0 / lambda, (PI / lambda).sqrt()]
}

fn key(weight: &str, n: usize, lambda: Option<f64>, f: &str, detail: &str) -> RowKey {
    RowKey { weight: weight.into(), n, lambda, test_function: f.into(), detail: detail.into() }
}

fn grid_ratios(sol: &GridSolution, f: &dyn SmoothFn) -> [f64; 5] {
    let nm = sol.norms();
    let sup_f = f.sup_norm().unwrap_or_else(|| {
        (0..sol.spec.len()).filter(|i| sol.spec.is_interior(*i)).map(|i| sol.rhs[i].abs()).fold(0.0, f64::max)
    });
    [nm.u / nm.rhs, nm.grad / nm.rhs, nm.hess / nm.rhs, nm.sup_u / sup_f, nm.sup_grad / sup_f]
}

/// Random cosine ridges `cos(<a, x> + b)`, `a_i` uniform on `[-1, 1]`.
pub fn weak_test_functions(n: usize, count: usize, seed: u64) -> Vec<Ridge> {
    let mut r = rng::stream(seed, rng::tag_of("weak_phi"), n as u64);
    (0..count)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            Ridge::new(Profile::Cos, a, r.random_range(0.0..2.0 * PI))
        })
        .collect()
}

/// `(lambda <u, phi> + <grad u, grad phi> - <f, phi>) / (|f| |phi|_{H^1})`
/// against the discrete invariant weights.
pub fn weak_residual(sol: &GridSolution, lambda: f64, phi: &dyn SmoothFn) -> f64 {
    let d = sol.spec.dim;
    let (mut m0, mut num, mut ff, mut pp, mut gg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut gp = vec![0.0; d];
    for i in 0..sol.spec.len() {
        let x = sol.spec.coords(i);
        let m = sol.weights[i];
        let p = phi.value(&x);
        phi.gradient_into(&x, &mut gp);
        let gu = &sol.gradient[i * d..(i + 1) * d];
        m0 += m;
        num += m * (lambda * sol.values[i] * p + dot(gu, &gp) - sol.rhs[i] * p);
        ff += m * sol.rhs[i] * sol.rhs[i];
        pp += m * p * p;
        gg += m * dot(&gp, &gp);
    }
    (num / m0).abs() / ((ff / m0).sqrt() * ((pp + gg) / m0).sqrt())
}

/// Grid rows for one realized weight; returns the fine-mesh solutions keyed
/// by `(lambda index, test function)` for the strong-solution ladder.
fn grid_rows(cfg: &ExperimentConfig, real: &Realized, rows: &mut Vec<EstimateRow>) -> BTreeMap<(usize, String), GridSolution> {
    let n = real.n;
    let mesh = cfg.grid.mesh(n);
    let fine = GridSpec::new(n, cfg.grid.radius, mesh);
    let coarse = GridSpec::new(n, cfg.grid.radius, 2.0 * mesh);
    let phis = weak_test_functions(n, cfg.experiment.weak_tests, cfg.seed);
    let mut kept = BTreeMap::new();
    for (li, &lambda) in cfg.experiment.lambdas.iter().enumerate() {
        let bounds = ratio_bounds(lambda);
        for fname in &cfg.experiment.test_functions {
            let k = key(&real.name, n, Some(lambda), fname, "grid");
            let f = named_test_function(fname, n).expect("validated");
            let fv = |x: &[f64]| f.value(x);
            let sols = solve_elliptic_grid(&*real.weight, &fv, lambda, &fine)
                .and_then(|a| solve_elliptic_grid(&*real.weight, &fv, lambda, &coarse).map(|b| (a, b)));
            let (sh, s2h) = match sols {
                Ok(s) => s,
                Err(e) => {
                    for (q, b) in RATIO_QUANTITIES.iter().zip(bounds) {
                        rows.push(EstimateRow::failed(&k, *q, b, &e.to_string()));
                    }
                    continue;
                }
            };
            let rh = grid_ratios(&sh, &*f);
            let r2h = grid_ratios(&s2h, &*f);
            for j in 0..5 {
                let allowance = (rh[j] - r2h[j]).abs() + ROUNDOFF * bounds[j].max(1.0);
                rows.push(EstimateRow::checked(&k, RATIO_QUANTITIES[j], rh[j], 0.0, bounds[j], allowance));
            }
            if !phis.is_empty() {
                let (mut est, mut allow) = (0.0f64, 0.0f64);
                for phi in &phis {
                    let a = weak_residual(&sh, lambda, phi);
                    let b = weak_residual(&s2h, lambda, phi);
                    est = est.max(a);
                    allow = allow.max((a - b).abs());
                }
                let kw = key(&real.name, n, Some(lambda), fname, &format!("grid max over {} phi", phis.len()));
                rows.push(EstimateRow::checked(&kw, Quantity::WeakIdentity, est, 0.0, 0.0, allow + 1e-10));
            }
            kept.insert((li, fname.clone()), sh);
        }
    }
    kept
}

/// Nested Monte Carlo estimates at importance-sampled outer points.
pub struct NestedEstimates {
    /// `exp(-(psi - min psi))` at each outer point.
    pub is_weights: Vec<f64>,
    /// `[fn][outer]`.
    pub f_values: Vec<Vec<f64>>,
    /// `[fn][lambda][outer]`.
    pub points: Vec<Vec<Vec<PointEstimate>>>,
}

#[derive(Debug, Clone, Copy)]
pub struct PointEstimate {
    pub u: f64,
    pub u_se: f64,
    pub u_bias: f64,
    pub grad_sq: f64,
    pub grad_se: f64,
    pub grad_bias: f64,
    pub hess_sq: f64,
    pub hess_bias: f64,
}

/// Outer points from `gaussian_points` (shared across `n` coordinatewise);
/// each outer point gets its own inner seed so inner errors are independent
/// across outer points and enter the delta-method variance.
pub fn nested_estimates(cfg: &ExperimentConfig, w: &dyn ConvexWeight, fns: &[FnRef], lambdas: &[f64]) -> Result<NestedEstimates> {
    let n = w.dim();
    let mc = &cfg.mc;
    let pts = gaussian_points(n, mc.outer_samples, rng::derive_seed(cfg.seed, rng::tag_of("outer")));
    let psi: Vec<f64> = pts.iter().map(|p| w.value(p)).collect();
    let pmin = psi.iter().cloned().fold(f64::INFINITY, f64::min);
    let is_weights = psi.iter().map(|v| (-(v - pmin)).exp()).collect();
    let f_values = fns.iter().map(|f| pts.iter().map(|p| f.value(p)).collect()).collect();
    let refs: Vec<&dyn SmoothFn> = fns.iter().map(|f| &**f).collect();
    let mut points = vec![vec![Vec::with_capacity(pts.len()); lambdas.len()]; fns.len()];
    let inner = rng::derive_seed(cfg.seed, rng::tag_of("inner"));
    for (k, p) in pts.iter().enumerate() {
        let st = Stencil::new(p, mc.fd_step, n > 1);
        let dcfg = mc.diffusion(rng::derive_seed(inner, k as u64));
        let batch = resolvent_batch(w, &refs, lambdas, &st.points, &dcfg)?;
        for fi in 0..fns.len() {
            for li in 0..lambdas.len() {
                let d = derivatives_from(&st, &batch.samples[fi][li], batch.tails[fi][li], batch.horizon);
                let g: Vec<f64> = d.gradient.iter().map(|v| v.mean).collect();
                let gsq = dot(&g, &g);
                let gvar: f64 = d.gradient.iter().map(|v| (v.mean * v.std_error).powi(2)).sum();
                points[fi][li].push(PointEstimate {
                    u: d.value.mean,
                    u_se: d.value.std_error,
                    u_bias: d.value.bias_bound,
                    grad_sq: gsq,
                    grad_se: if gsq > 0.0 { (gvar / gsq).sqrt() } else { d.gradient.iter().map(|v| v.std_error).fold(0.0, f64::max) },
                    grad_bias: d.gradient.iter().map(|v| v.bias_bound * v.bias_bound).sum::<f64>().sqrt(),
                    hess_sq: d.hessian.iter().map(|v| v.mean * v.mean).sum(),
                    hess_bias: d.hessian.iter().map(|v| v.bias_bound * v.bias_bound).sum::<f64>().sqrt(),
                });
            }
        }
    }
    Ok(NestedEstimates { is_weights, f_values, points })
}

/// `(ratio, se, allowance)` for the five ratio quantities of one `(f, lambda)`.
pub fn nested_ratios(est: &NestedEstimates, fi: usize, li: usize, f: &dyn SmoothFn) -> [(f64, f64, f64); 5] {
    let w = &est.is_weights;
    let p = &est.points[fi][li];
    let f2: Vec<f64> = est.f_values[fi].iter().map(|v| v * v).collect();
    let sw: f64 = w.iter().sum();
    let wmean = |xs: &mut dyn Iterator<Item = f64>| xs.zip(w).map(|(x, wk)| wk * x).sum::<f64>() / sw;
    let fnorm = wmean(&mut f2.iter().cloned()).sqrt();
    let ratio = |col: Vec<f64>| weighted_delta(w, &[col, f2.clone()], |m| (m[0] / m[1]).sqrt());
    let (l2, l2se) = ratio(p.iter().map(|e| e.u * e.u).collect());
    let (gr, grse) = ratio(p.iter().map(|e| e.grad_sq).collect());
    let (hr, hrse) = ratio(p.iter().map(|e| e.hess_sq).collect());
    let l2a = wmean(&mut p.iter().map(|e| e.u_bias * e.u_bias)).sqrt() / fnorm;
    let gra = wmean(&mut p.iter().map(|e| e.grad_bias * e.grad_bias)).sqrt() / fnorm;
    let hra = wmean(&mut p.iter().map(|e| e.hess_bias * e.hess_bias)).sqrt() / fnorm;
    let sup_f = f.sup_norm().unwrap_or_else(|| est.f_values[fi].iter().map(|v| v.abs()).fold(0.0, f64::max));
    let ku = (0..p.len()).max_by(|a, b| p[*a].u.abs().total_cmp(&p[*b].u.abs())).unwrap_or(0);
    let kg = (0..p.len()).max_by(|a, b| p[*a].grad_sq.total_cmp(&p[*b].grad_sq)).unwrap_or(0);
    [
        (l2, l2se, l2a),
        (gr, grse, gra),
        (hr, hrse, hra),
        (p[ku].u.abs() / sup_f, p[ku].u_se / sup_f, p[ku].u_bias / sup_f),
        (p[kg].grad_sq.sqrt() / sup_f, p[kg].grad_se / sup_f, p[kg].grad_bias / sup_f),
    ]
}

fn mc_rows(cfg: &ExperimentConfig, real: &Realized, rows: &mut Vec<EstimateRow>) {
    let n = real.n;
    let names = &cfg.experiment.test_functions;
    let fns: Vec<FnRef> = names.iter().map(|f| named_test_function(f, n).expect("validated")).collect();
    let lambdas = &cfg.experiment.lambdas;
    match nested_estimates(cfg, &*real.weight, &fns, lambdas) {
        Ok(est) => {
            for (fi, fname) in names.iter().enumerate() {
                for (li, &lambda) in lambdas.iter().enumerate() {
                    let k = key(&real.name, n, Some(lambda), fname, "mc");
                    let r = nested_ratios(&est, fi, li, &*fns[fi]);
                    for j in 0..5 {
                        rows.push(EstimateRow::checked(&k, RATIO_QUANTITIES[j], r[j].0, r[j].1, ratio_bounds(lambda)[j], r[j].2));
                    }
                }
            }
        }
        Err(e) => {
            for fname in names {
                for &lambda in lambdas {
                    let k = key(&real.name, n, Some(lambda), fname, "mc");
                    for (q, b) in RATIO_QUANTITIES.iter().zip(ratio_bounds(lambda)) {
                        rows.push(EstimateRow::failed(&k, *q, b, &e.to_string()));
                    }
                }
            }
        }
    }
}

/// `|| lambda V_n - L_nu V_n - f ||_{L2(nu)}` for the grid solutions `V_n`
/// under the full max-endpoint weight, for test functions of `x_1` only.
fn strong_rows(
    cfg: &ExperimentConfig,
    name: &str,
    full: &MaxEndpointWeight,
    solutions: &BTreeMap<usize, BTreeMap<(usize, String), GridSolution>>,
    rows: &mut Vec<EstimateRow>,
) {
    let m = full.dim();
    let nmax = solutions.keys().copied().max().unwrap_or(0);
    if nmax == 0 {
        return;
    }
    let pts = gaussian_points(m, cfg.mc.full_samples, rng::derive_seed(cfg.seed, rng::tag_of("full")));
    let evals: Vec<(f64, Vec<f64>)> = pts
        .iter()
        .map(|p| {
            let (v, j) = full.eval_with_tail(p, None);
            (v, (0..nmax).map(|i| full.gradient_coord(i, j)).collect())
        })
        .collect();
    let umin = evals.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = evals.iter().map(|e| (-(e.0 - umin)).exp()).collect();
    for (li, &lambda) in cfg.experiment.lambdas.iter().enumerate() {
        for fname in &cfg.experiment.test_functions {
            let f = named_test_function(fname, nmax).expect("validated");
            if f.active_dim() > 1 {
                continue;
            }
            let mut prev: Option<f64> = None;
            for (&n, sols) in solutions {
                let Some(sol) = sols.get(&(li, fname.clone())) else { continue };
                let lim = sol.spec.half_count() as f64 * sol.spec.mesh * (1.0 - 1e-12);
                let col: Vec<f64> = pts
                    .iter()
                    .zip(&evals)
                    .map(|(p, (_, gu))| {
                        let x: Vec<f64> = p[..n].iter().map(|v| v.clamp(-lim, lim)).collect();
                        let (v, g, h) = sol.interpolate(&x).expect("clamped into the box");
                        let lap: f64 = (0..n).map(|i| h[i * n + i]).sum();
                        let drift: f64 = (0..n).map(|i| (gu[i] + p[i]) * g[i]).sum();
                        let r = lambda * v - (lap - drift) - f.value(p);
                        r * r
                    })
                    .collect();
                let (est, se) = weighted_delta(&w, &[col], |mm| mm[0].sqrt());
                let k = key(name, n, Some(lambda), fname, &format!("ladder eps=1/{n}"));
                // Solver tolerance amplified by the 1/h^2 of the difference
                // stencils; matters only when f is solved exactly (constants).
                rows.push(EstimateRow::checked(&k, Quantity::StrongResidual, est, se, prev.unwrap_or(est), 1e-8));
                prev = Some(est);
            }
        }
    }
}

/// Probe rows: the three L2 ratios by nested Monte Carlo at each `n`, then a
/// weighted least-squares slope in `n` per ratio.
fn probe_rows(cfg: &ExperimentConfig, rows: &mut Vec<EstimateRow>) -> Result<()> {
    let Some(p) = &cfg.probe else { return Ok(()) };
    let spec = WeightSpec { kind: p.weight, modes: p.dims.iter().copied().max().unwrap_or(1).max(256), grid_points: 2048, dims: None, spec: None };
    let mut series: [Vec<(f64, f64, f64)>; 3] = Default::default();
    let mut xs = Vec::new();
    let mut name = String::new();
    for &n in &p.dims {
        let real = realize(cfg, &spec, n)?;
        name = real.name.clone();
        let f = named_test_function(&p.test_function, n)?;
        let est = nested_estimates(cfg, &*real.weight, &[f.clone()], &[p.lambda])?;
        let r = nested_ratios(&est, 0, 0, &*f);
        let k = key(&real.name, n, Some(p.lambda), &p.test_function, "probe");
        for j in 0..5 {
            rows.push(EstimateRow::checked(&k, RATIO_QUANTITIES[j], r[j].0, r[j].1, ratio_bounds(p.lambda)[j], r[j].2));
        }
        for j in 0..3 {
            series[j].push(r[j]);
        }
        xs.push(n as f64);
    }
    let nmax = *p.dims.iter().max().unwrap();
    for (j, label) in ["L2", "grad", "hess"].iter().enumerate() {
        let y: Vec<f64> = series[j].iter().map(|v| v.0).collect();
        let se: Vec<f64> = series[j].iter().map(|v| v.1).collect();
        let (slope, slope_se) = ls_slope(&xs, &y, &se);
        let k = key(&name, nmax, Some(p.lambda), &p.test_function, &format!("{label} slope over n={:?}", p.dims));
        rows.push(EstimateRow::checked(&k, Quantity::NSlope, slope.abs(), slope_se, 0.0, 0.0));
    }
    Ok(())
}

pub fn verify_main_estimates(cfg: &ExperimentConfig) -> Result<Vec<EstimateRow>> {
    let mut rows = Vec::new();
    for spec in &cfg.weights {
        let mut solutions = BTreeMap::new();
        let mut full: Option<Arc<MaxEndpointWeight>> = None;
        for n in cfg.dims_for(spec) {
            let real = realize(cfg, spec, n)?;
            if n <= cfg.grid.max_dim {
                let sols = grid_rows(cfg, &real, &mut rows);
                if spec.kind == WeightKind::MaxEndpoint {
                    solutions.insert(n, sols);
                    full = real.full.clone();
                }
            } else {
                mc_rows(cfg, &real, &mut rows);
            }
        }
        if let Some(full) = full {
            strong_rows(cfg, &spec.name(), &full, &solutions, &mut rows);
        }
    }
    probe_rows(cfg, &mut rows)?;
    Ok(rows)
}
