//! Smooth cylindrical test functions with analytic derivatives.
//!
//! A function reads only its first few coordinates but may be evaluated on
//! longer vectors; gradients and Hessians are sized by the input length.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::weight::dot;

pub trait SmoothFn: Send + Sync {
    /// Number of leading coordinates the function depends on.
    fn active_dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient_into(&self, x: &[f64], g: &mut [f64]);
    /// Row-major `x.len() x x.len()` Hessian.
    fn hessian_into(&self, x: &[f64], h: &mut [f64]);
    /// `sup |f|` when finite.
    fn sup_norm(&self) -> Option<f64>;
    fn label(&self) -> String;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; x.len() * x.len()];
        self.hessian_into(x, &mut h);
        h
    }
}

pub type FnRef = Arc<dyn SmoothFn>;

#[derive(Debug, Clone)]
pub struct Constant(pub f64);

impl SmoothFn for Constant {
    fn active_dim(&self) -> usize {
        0
    }
    fn value(&self, _x: &[f64]) -> f64 {
        self.0
    }
    fn gradient_into(&self, _x: &[f64], g: &mut [f64]) {
        g.fill(0.0);
    }
    fn hessian_into(&self, _x: &[f64], h: &mut [f64]) {
        h.fill(0.0);
    }
    fn sup_norm(&self) -> Option<f64> {
        Some(self.0.abs())
    }
    fn label(&self) -> String {
        "const".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Identity,
    Square,
    Tanh,
    Cos,
    Logistic,
}

impl Profile {
    /// `(g, g', g'')` at `s`.
    fn eval(self, s: f64) -> (f64, f64, f64) {
        match self {
            Profile::Identity => (s, 1.0, 0.0),
            Profile::Square => (s * s, 2.0 * s, 2.0),
            Profile::Tanh => {
                let t = s.tanh();
                let d = 1.0 - t * t;
                (t, d, -2.0 * t * d)
            }
            Profile::Cos => {
                let (sn, cs) = s.sin_cos();
                (cs, -sn, -cs)
            }
            Profile::Logistic => {
                let p = if s >= 0.0 { 1.0 / (1.0 + (-s).exp()) } else { s.exp() / (1.0 + s.exp()) };
                let d = p * (1.0 - p);
                (p, d, d * (1.0 - 2.0 * p))
            }
        }
    }

    fn sup(self) -> Option<f64> {
        match self {
            Profile::Tanh | Profile::Cos | Profile::Logistic => Some(1.0),
            Profile::Identity | Profile::Square => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Profile::Identity => "linear",
            Profile::Square => "square",
            Profile::Tanh => "tanh",
            Profile::Cos => "cos",
            Profile::Logistic => "logistic",
        }
    }
}

/// `scale * g(<a, x> + b)` for a scalar profile `g`.
#[derive(Debug, Clone)]
pub struct Ridge {
    pub a: Vec<f64>,
    pub b: f64,
    pub scale: f64,
    pub profile: Profile,
}

impl Ridge {
    pub fn new(profile: Profile, a: Vec<f64>, b: f64) -> Self {
        Ridge { a, b, scale: 1.0, profile }
    }

    /// `g(x_k)` on coordinate `k`.
    pub fn coordinate(profile: Profile, k: usize) -> Self {
        let mut a = vec![0.0; k + 1];
        a[k] = 1.0;
        Ridge::new(profile, a, 0.0)
    }

    fn arg(&self, x: &[f64]) -> f64 {
        self.b + dot(&self.a, &x[..self.a.len()])
    }
}

impl SmoothFn for Ridge {
    fn active_dim(&self) -> usize {
        self.a.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.scale * self.profile.eval(self.arg(x)).0
    }
    fn gradient_into(&self, x: &[f64], g: &mut [f64]) {
        let d = self.scale * self.profile.eval(self.arg(x)).1;
        g.fill(0.0);
        for (gi, ai) in g.iter_mut().zip(&self.a) {
            *gi = d * ai;
        }
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        let n = x.len();
        let d2 = self.scale * self.profile.eval(self.arg(x)).2;
        h.fill(0.0);
        for (i, ai) in self.a.iter().enumerate() {
            for (j, aj) in self.a.iter().enumerate() {
                h[i * n + j] = d2 * ai * aj;
            }
        }
    }
    fn sup_norm(&self) -> Option<f64> {
        self.profile.sup().map(|s| s * self.scale.abs())
    }
    fn label(&self) -> String {
        self.profile.name().into()
    }
}

/// Probabilists' Hermite polynomial `He_k(x_coord)`.
#[derive(Debug, Clone)]
pub struct Hermite {
    pub k: usize,
    pub coord: usize,
}

/// `(He_k, He_k', He_k'')` at `s`, using `He_k' = k He_{k-1}`.
pub fn hermite_triple(k: usize, s: f64) -> (f64, f64, f64) {
    let mut h = vec![1.0, s];
    for j in 1..k.max(1) {
        let next = s * h[j] - j as f64 * h[j - 1];
        h.push(next);
    }
    let at = |j: isize| if j < 0 { 0.0 } else { h[j as usize] };
    let k = k as isize;
    let kf = k as f64;
    (at(k), kf * at(k - 1), kf * (kf - 1.0) * at(k - 2))
}

impl SmoothFn for Hermite {
    fn active_dim(&self) -> usize {
        self.coord + 1
    }
    fn value(&self, x: &[f64]) -> f64 {
        hermite_triple(self.k, x[self.coord]).0
    }
    fn gradient_into(&self, x: &[f64], g: &mut [f64]) {
        g.fill(0.0);
        g[self.coord] = hermite_triple(self.k, x[self.coord]).1;
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        h.fill(0.0);
        h[self.coord * x.len() + self.coord] = hermite_triple(self.k, x[self.coord]).2;
    }
    fn sup_norm(&self) -> Option<f64> {
        if self.k == 0 {
            Some(1.0)
        } else {
            None
        }
    }
    fn label(&self) -> String {
        format!("hermite{}", self.k)
    }
}

/// `c_1 f_1 + c_2 f_2 + ...`
#[derive(Clone)]
pub struct Sum {
    pub terms: Vec<(f64, FnRef)>,
}

impl SmoothFn for Sum {
    fn active_dim(&self) -> usize {
        self.terms.iter().map(|(_, f)| f.active_dim()).max().unwrap_or(0)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(x)).sum()
    }
    fn gradient_into(&self, x: &[f64], g: &mut [f64]) {
        g.fill(0.0);
        let mut tmp = vec![0.0; g.len()];
        for (c, f) in &self.terms {
            f.gradient_into(x, &mut tmp);
            g.iter_mut().zip(&tmp).for_each(|(a, b)| *a += c * b);
        }
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        h.fill(0.0);
        let mut tmp = vec![0.0; h.len()];
        for (c, f) in &self.terms {
            f.hessian_into(x, &mut tmp);
            h.iter_mut().zip(&tmp).for_each(|(a, b)| *a += c * b);
        }
    }
    fn sup_norm(&self) -> Option<f64> {
        self.terms.iter().map(|(c, f)| f.sup_norm().map(|s| s * c.abs())).sum()
    }
    fn label(&self) -> String {
        "sum".into()
    }
}

/// A value-only function; derivatives by central differences with step `step`.
pub struct ValueFn<F> {
    pub f: F,
    pub active: usize,
    pub sup: Option<f64>,
    pub step: f64,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ValueFn<F> {
    pub fn new(active: usize, sup: Option<f64>, f: F) -> Self {
        ValueFn { f, active, sup, step: 1e-4 }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> SmoothFn for ValueFn<F> {
    fn active_dim(&self) -> usize {
        self.active
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn gradient_into(&self, x: &[f64], g: &mut [f64]) {
        let mut p = x.to_vec();
        g.fill(0.0);
        for i in 0..self.active.min(x.len()) {
            p[i] = x[i] + self.step;
            let up = (self.f)(&p);
            p[i] = x[i] - self.step;
            let dn = (self.f)(&p);
            p[i] = x[i];
            g[i] = (up - dn) / (2.0 * self.step);
        }
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        let n = x.len();
        let k = self.active.min(n);
        let e = self.step;
        let mut p = x.to_vec();
        let f0 = (self.f)(x);
        h.fill(0.0);
        for i in 0..k {
            for j in i..k {
                let mut at = |di: f64, dj: f64| {
                    p[i] += di;
                    p[j] += dj;
                    let v = (self.f)(&p);
                    p[i] = x[i];
                    p[j] = x[j];
                    v
                };
                let v = if i == j {
                    (at(e, 0.0) - 2.0 * f0 + at(-e, 0.0)) / (e * e)
                } else {
                    (at(e, e) - at(e, -e) - at(-e, e) + at(-e, -e)) / (4.0 * e * e)
                };
                h[i * n + j] = v;
                h[j * n + i] = v;
            }
        }
    }
    fn sup_norm(&self) -> Option<f64> {
        self.sup
    }
    fn label(&self) -> String {
        "closure".into()
    }
}

/// The H-frame coordinates of the endpoint functional `W(1)` on the first
/// `n` Karhunen-Loeve modes: `h_i(1) = 2 sqrt(2) (-1)^(i-1) / ((2i-1) pi)`.
pub fn endpoint_direction(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * 2.0 * std::f64::consts::SQRT_2 / ((2 * k + 1) as f64 * std::f64::consts::PI)
        })
        .collect()
}

/// Harness test functions by name, for an `n`-dimensional truncation.
///
/// `const` is 1, `tanh` is `tanh(x_1)`, `cos` is the cosine of the endpoint
/// functional restricted to `n` modes, `indicator` is a logistic smoothing of
/// `1{x_1 > 0.3}` with width 0.25.
pub fn named_test_function(name: &str, n: usize) -> Result<FnRef> {
    Ok(match name {
        "const" => Arc::new(Constant(1.0)),
        "tanh" => Arc::new(Ridge::coordinate(Profile::Tanh, 0)),
        "tanh_slow" => Arc::new(Ridge::new(Profile::Tanh, vec![1.0 / 3.0], 0.0)),
        "cos" => Arc::new(Ridge::new(Profile::Cos, endpoint_direction(n), 0.0)),
        "indicator" => Arc::new(Ridge::new(Profile::Logistic, vec![4.0], -0.3 * 4.0)),
        "linear" => Arc::new(Ridge::coordinate(Profile::Identity, 0)),
        "hermite2" => Arc::new(Hermite { k: 2, coord: 0 }),
        other => return Err(Error::Config(format!("unknown test function {other:?}"))),
    })
}
