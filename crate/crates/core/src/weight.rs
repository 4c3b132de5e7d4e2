//! Convex potentials given by value and subgradient oracles.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub trait ConvexWeight: Send + Sync {
    /// Number of active coordinates.
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Writes a subgradient at `x` into `g` (the gradient where differentiable).
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]);
    /// Lipschitz constant of the gradient, when the weight is differentiable.
    fn grad_lipschitz(&self) -> Option<f64>;
    fn label(&self) -> String;

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.subgradient_into(x, &mut g);
        g
    }

    fn value_and_subgradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        self.subgradient_into(x, g);
        self.value(x)
    }
}

pub type WeightRef = Arc<dyn ConvexWeight>;

impl<W: ConvexWeight + ?Sized> ConvexWeight for Arc<W> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        (**self).subgradient_into(x, g)
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        (**self).grad_lipschitz()
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn value_and_subgradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        (**self).value_and_subgradient(x, g)
    }
}

#[derive(Debug, Clone)]
pub struct Zero {
    pub dim: usize,
}

impl ConvexWeight for Zero {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn subgradient_into(&self, _x: &[f64], g: &mut [f64]) {
        g.fill(0.0);
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
    fn label(&self) -> String {
        "zero".into()
    }
}

/// `sum_i curv_i x_i^2 / 2 + <b, x> + c`, with `curv_i >= 0`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub curv: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl Quadratic {
    pub fn new(curv: Vec<f64>) -> Self {
        let n = curv.len();
        Quadratic { curv, b: vec![0.0; n], c: 0.0 }
    }

    pub fn isotropic(dim: usize, curv: f64) -> Self {
        Quadratic::new(vec![curv; dim])
    }

    pub fn with_linear(mut self, b: Vec<f64>, c: f64) -> Self {
        assert_eq!(b.len(), self.curv.len());
        self.b = b;
        self.c = c;
        self
    }
}

impl ConvexWeight for Quadratic {
    fn dim(&self) -> usize {
        self.curv.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.c;
        for i in 0..x.len() {
            v += 0.5 * self.curv[i] * x[i] * x[i] + self.b[i] * x[i];
        }
        v
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        for i in 0..x.len() {
            g[i] = self.curv[i] * x[i] + self.b[i];
        }
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        Some(self.curv.iter().cloned().fold(0.0, f64::max))
    }
    fn label(&self) -> String {
        "quadratic".into()
    }
}

/// `<a, x> + c`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub a: Vec<f64>,
    pub c: f64,
}

impl ConvexWeight for Linear {
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.c + self.a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>()
    }
    fn subgradient_into(&self, _x: &[f64], g: &mut [f64]) {
        g.copy_from_slice(&self.a);
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
    fn label(&self) -> String {
        "linear".into()
    }
}

/// `scale * sum_i |x_i|`. The subgradient at a kink is 0.
#[derive(Debug, Clone)]
pub struct L1 {
    pub dim: usize,
    pub scale: f64,
}

impl ConvexWeight for L1 {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.scale * x.iter().map(|v| v.abs()).sum::<f64>()
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        for (gi, &xi) in g.iter_mut().zip(x) {
            *gi = if xi > 0.0 {
                self.scale
            } else if xi < 0.0 {
                -self.scale
            } else {
                0.0
            };
        }
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        None
    }
    fn label(&self) -> String {
        "l1".into()
    }
}

/// Separable Huber function with threshold `delta`.
#[derive(Debug, Clone)]
pub struct Huber {
    pub dim: usize,
    pub delta: f64,
}

impl ConvexWeight for Huber {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .map(|&v| {
                let a = v.abs();
                if a <= self.delta {
                    0.5 * v * v / self.delta
                } else {
                    a - 0.5 * self.delta
                }
            })
            .sum()
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        for (gi, &v) in g.iter_mut().zip(x) {
            *gi = (v / self.delta).clamp(-1.0, 1.0);
        }
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        Some(1.0 / self.delta)
    }
    fn label(&self) -> String {
        "huber".into()
    }
}

/// `max_j (<a_j, x> + b_j)`; the subgradient is the slope of the first maximizer.
#[derive(Debug, Clone)]
pub struct MaxAffine {
    pub slopes: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl MaxAffine {
    fn argmax(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (j, (a, b)) in self.slopes.iter().zip(&self.intercepts).enumerate() {
            let v = b + a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
            if v > best.1 {
                best = (j, v);
            }
        }
        best
    }
}

impl ConvexWeight for MaxAffine {
    fn dim(&self) -> usize {
        self.slopes[0].len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.argmax(x).1
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        g.copy_from_slice(&self.slopes[self.argmax(x).0]);
    }
    fn value_and_subgradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let (j, v) = self.argmax(x);
        g.copy_from_slice(&self.slopes[j]);
        v
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        None
    }
    fn label(&self) -> String {
        "max_affine".into()
    }
}

/// `tau * log sum_j exp((<a_j, x> + b_j) / tau)`.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    pub slopes: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub tau: f64,
}

impl LogSumExp {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.slopes
            .iter()
            .zip(&self.intercepts)
            .map(|(a, b)| (b + a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>()) / self.tau)
            .collect()
    }
}

impl ConvexWeight for LogSumExp {
    fn dim(&self) -> usize {
        self.slopes[0].len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let s = self.scores(x);
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.tau * (m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln())
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        let s = self.scores(x);
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = p.iter().sum();
        g.fill(0.0);
        for (pj, a) in p.iter().zip(&self.slopes) {
            for (gi, ai) in g.iter_mut().zip(a) {
                *gi += pj / z * ai;
            }
        }
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        let r2 = self
            .slopes
            .iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        Some(r2 / self.tau)
    }
    fn label(&self) -> String {
        "log_sum_exp".into()
    }
}

/// Caches value and subgradient by the exact bit pattern of the point.
/// Readers share the lock; a miss computes outside the lock and inserts.
pub struct Memoized {
    pub inner: WeightRef,
    cache: std::sync::RwLock<std::collections::HashMap<Vec<u64>, (f64, Vec<f64>)>>,
}

impl Memoized {
    pub fn new(inner: WeightRef) -> Self {
        Memoized { inner, cache: Default::default() }
    }

    fn lookup(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(hit) = self.cache.read().unwrap().get(&key) {
            return hit.clone();
        }
        let mut g = vec![0.0; x.len()];
        let v = self.inner.value_and_subgradient(x, &mut g);
        self.cache.write().unwrap().insert(key, (v, g.clone()));
        (v, g)
    }

    pub fn cached(&self) -> usize {
        self.cache.read().unwrap().len()
    }
}

impl ConvexWeight for Memoized {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.lookup(x).0
    }
    fn subgradient_into(&self, x: &[f64], g: &mut [f64]) {
        g.copy_from_slice(&self.lookup(x).1);
    }
    fn value_and_subgradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let (v, gg) = self.lookup(x);
        g.copy_from_slice(&gg);
        v
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        self.inner.grad_lipschitz()
    }
    fn label(&self) -> String {
        self.inner.label()
    }
}

/// Worst violations of the convexity, subgradient and gradient-Lipschitz
/// inequalities over sampled points.
#[derive(Debug, Clone, Copy, Default)]
pub struct Conformance {
    pub convexity: f64,
    pub subgradient: f64,
    pub lipschitz: f64,
}

/// Samples `pairs` Gaussian pairs of scale `scale` and reports the largest
/// amount by which each defining inequality is violated (0 when none is).
pub fn conformance<R: Rng>(w: &dyn ConvexWeight, pairs: usize, scale: f64, rng: &mut R) -> Conformance {
    let n = w.dim();
    let mut out = Conformance::default();
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    for _ in 0..pairs {
        let x: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let th: f64 = rng.random();
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| th * a + (1.0 - th) * b).collect();
        let (fx, fy) = (w.value(&x), w.value(&y));
        out.convexity = out.convexity.max(w.value(&z) - th * fx - (1.0 - th) * fy);
        w.subgradient_into(&x, &mut gx);
        w.subgradient_into(&y, &mut gy);
        let lin: f64 = gx.iter().zip(y.iter().zip(&x)).map(|(g, (b, a))| g * (b - a)).sum();
        out.subgradient = out.subgradient.max(fx + lin - fy);
        if let Some(l) = w.grad_lipschitz() {
            out.lipschitz = out.lipschitz.max(dist(&gx, &gy) - l * dist(&x, &y));
        }
    }
    out
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {t:?}: {e}"))))
        .collect()
}

/// Parses an analytic weight description of the form `kind[:params]`:
/// `zero`, `quadratic:c1,c2,..` (one curvature or one per coordinate),
/// `linear:a1,..`, `l1[:scale]`, `huber[:delta]`.
pub fn parse_weight(desc: &str, dim: usize) -> Result<WeightRef> {
    let (kind, params) = match desc.split_once(':') {
        Some((k, p)) => (k.trim(), Some(p)),
        None => (desc.trim(), None),
    };
    let fill = |v: Vec<f64>| -> Result<Vec<f64>> {
        match v.len() {
            1 => Ok(vec![v[0]; dim]),
            l if l == dim => Ok(v),
            l => Err(Error::Config(format!("{kind}: expected 1 or {dim} parameters, got {l}"))),
        }
    };
    Ok(match kind {
        "zero" => Arc::new(Zero { dim }),
        "quadratic" => {
            let c = fill(params.map(parse_list).transpose()?.unwrap_or(vec![1.0]))?;
            if c.iter().any(|v| *v < 0.0) {
                return Err(Error::Config("quadratic curvature must be >= 0".into()));
            }
            Arc::new(Quadratic::new(c))
        }
        "linear" => Arc::new(Linear { a: fill(params.map(parse_list).transpose()?.unwrap_or(vec![1.0]))?, c: 0.0 }),
        "l1" | "abs" => {
            let s = params.map(parse_list).transpose()?.map(|v| v[0]).unwrap_or(1.0);
            Arc::new(L1 { dim, scale: s })
        }
        "huber" => {
            let d = params.map(parse_list).transpose()?.map(|v| v[0]).unwrap_or(1.0);
            if d <= 0.0 {
                return Err(Error::Config("huber delta must be > 0".into()));
            }
            Arc::new(Huber { dim, delta: d })
        }
        other => return Err(Error::Config(format!("unknown weight {other:?}"))),
    })
}
