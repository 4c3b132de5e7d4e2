//! Product integration of sampled functions against `exp(-lambda t)`, and
//! Gauss-Legendre nodes.

/// `int_0^h s^k exp(-lambda s) ds` for `k = 0, 1, 2`.
fn moments(lambda: f64, h: f64) -> [f64; 3] {
    let x = lambda * h;
    if x < 0.5 {
        // Series in lambda; 30 terms are far below roundoff for x < 0.5.
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut term = h.powi(k as i32 + 1);
            let mut s = 0.0;
            for m in 0..30 {
                s += term / (k + m + 1) as f64;
                term *= -x / (m + 1) as f64;
            }
            *o = s;
        }
        out
    } else {
        let e = (-x).exp();
        let i0 = (1.0 - e) / lambda;
        let i1 = (i0 - h * e) / lambda;
        let i2 = (2.0 * i1 - h * h * e) / lambda;
        [i0, i1, i2]
    }
}

/// Weights `w_j` such that `sum_j w_j g(t_j)` integrates the piecewise
/// quadratic interpolant of `g` (linear on a final odd interval) against
/// `exp(-lambda t)` over `[t_0, t_last]`. Nodes must be strictly increasing.
pub fn laplace_weights(nodes: &[f64], lambda: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    let mut j = 0;
    while j + 1 < n {
        let a = nodes[j];
        let scale = (-lambda * a).exp();
        if j + 2 < n {
            let (s1, s2) = (nodes[j + 1] - a, nodes[j + 2] - a);
            let m = moments(lambda, s2);
            // Lagrange basis on {0, s1, s2} in monomial form.
            let l0 = [1.0, -(s1 + s2) / (s1 * s2), 1.0 / (s1 * s2)];
            let l1 = [0.0, s2 / (s1 * (s2 - s1)), -1.0 / (s1 * (s2 - s1))];
            let l2 = [0.0, -s1 / (s2 * (s2 - s1)), 1.0 / (s2 * (s2 - s1))];
            for (off, l) in [l0, l1, l2].iter().enumerate() {
                w[j + off] += scale * (l[0] * m[0] + l[1] * m[1] + l[2] * m[2]);
            }
            j += 2;
        } else {
            let hh = nodes[j + 1] - a;
            let m = moments(lambda, hh);
            w[j] += scale * (m[0] - m[1] / hh);
            w[j + 1] += scale * m[1] / hh;
            j += 1;
        }
    }
    w
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, z);
        x[i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_quadratics_exactly() {
        let nodes: Vec<f64> = (0..9).map(|k| 0.3 * 1.4f64.powi(k) - 0.3).collect();
        for lambda in [0.01, 0.7, 3.0] {
            let w = laplace_weights(&nodes, lambda);
            // g(t) = 1: integral (1 - e^{-lambda T}) / lambda
            let t = *nodes.last().unwrap();
            let s: f64 = w.iter().sum();
            assert!((s - (1.0 - (-lambda * t).exp()) / lambda).abs() < 1e-13);
            // g(t) = t^2 is reproduced on every panel
            let q: f64 = w.iter().zip(&nodes).map(|(w, t)| w * t * t).sum();
            let exact = (2.0 - (-lambda * t).exp() * (lambda * t * (lambda * t + 2.0) + 2.0)) / lambda.powi(3);
            assert!((q - exact).abs() < 1e-12 * exact.max(1.0), "{lambda}: {q} vs {exact}");
        }
    }

    #[test]
    fn exponential_decay_accuracy() {
        let mut nodes = vec![0.0];
        let n = 64;
        let (a, b): (f64, f64) = (0.01, 16.0);
        for k in 0..n {
            nodes.push(a * (b / a).powf(k as f64 / (n - 1) as f64));
        }
        let w = laplace_weights(&nodes, 1.0);
        let q: f64 = w.iter().zip(&nodes).map(|(w, t)| w * (-t).exp()).sum();
        assert!((q - 0.5 * (1.0 - (-32.0f64).exp())).abs() < 1e-5, "{q}");
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let m14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((m14 - 2.0 / 15.0).abs() < 1e-14);
    }
}
