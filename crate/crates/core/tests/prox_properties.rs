use std::sync::Arc;

use proptest::prelude::*;
use weighted_ou::prox::{check_optimality, moreau_envelope, prox_point, MoreauEnvelope};
use weighted_ou::weight::{Huber, LogSumExp, MaxAffine, Quadratic, L1};
use weighted_ou::{ConvexWeight, WeightRef};

const TOL: f64 = 1e-10;

fn weight(kind: u8, slopes: &[f64]) -> WeightRef {
    let dim = 2;
    let rows: Vec<Vec<f64>> = slopes.chunks(dim).map(|c| c.to_vec()).collect();
    match kind % 5 {
        0 => Arc::new(Quadratic::new(vec![0.5, 2.0]).with_linear(vec![0.3, -0.4], 0.1)),
        1 => Arc::new(Huber { dim, delta: 0.6 }),
        2 => Arc::new(L1 { dim, scale: 1.3 }),
        3 => {
            let k = rows.len();
            Arc::new(MaxAffine { slopes: rows, intercepts: (0..k).map(|i| 0.1 * i as f64).collect() })
        }
        _ => {
            let k = rows.len();
            Arc::new(LogSumExp { slopes: rows, intercepts: vec![0.0; k], tau: 0.4 })
        }
    }
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 2)
}

fn family() -> impl Strategy<Value = (u8, Vec<f64>)> {
    (0u8..5, prop::collection::vec(-2.0..2.0f64, 8))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_minus_displacement_over_alpha((kind, slopes) in family(), x in point(), alpha in 0.05..5.0f64) {
        let w = weight(kind, &slopes);
        let p = prox_point(&*w, &x, alpha, TOL).unwrap();
        for (g, h) in p.gradient.iter().zip(&p.minimizer) {
            prop_assert_eq!(*g, -h / alpha);
        }
        prop_assert!(p.residual <= TOL);
    }

    #[test]
    fn envelope_lies_below_weight((kind, slopes) in family(), x in point(), alpha in 0.05..5.0f64) {
        let w = weight(kind, &slopes);
        let e = moreau_envelope(&*w, &x, alpha, TOL).unwrap();
        prop_assert!(e <= w.value(&x) + 1e-9, "envelope {} above weight {}", e, w.value(&x));
    }

    #[test]
    fn envelope_decreases_in_alpha((kind, slopes) in family(), x in point(), a in 0.05..2.0f64, factor in 1.1..4.0f64) {
        let w = weight(kind, &slopes);
        let small = moreau_envelope(&*w, &x, a, TOL).unwrap();
        let large = moreau_envelope(&*w, &x, a * factor, TOL).unwrap();
        prop_assert!(large <= small + 1e-9, "alpha {}: {} then {}", a, small, large);
    }

    #[test]
    fn proximal_map_is_nonexpansive((kind, slopes) in family(), x in point(), y in point(), alpha in 0.05..5.0f64) {
        let w = weight(kind, &slopes);
        let px = prox_point(&*w, &x, alpha, TOL).unwrap();
        let py = prox_point(&*w, &y, alpha, TOL).unwrap();
        let mut d_img = 0.0;
        let mut d_pts = 0.0;
        for i in 0..2 {
            let a = x[i] + px.minimizer[i] - y[i] - py.minimizer[i];
            d_img += a * a;
            d_pts += (x[i] - y[i]).powi(2);
        }
        prop_assert!(d_img.sqrt() <= d_pts.sqrt() + 1e-7);
    }

    #[test]
    fn minimizer_passes_variational_certificate((kind, slopes) in family(), x in point(), alpha in 0.05..5.0f64,
                                                probes in prop::collection::vec(prop::collection::vec(-4.0..4.0f64, 2), 20)) {
        let w = weight(kind, &slopes);
        let p = prox_point(&*w, &x, alpha, TOL).unwrap();
        let margin = check_optimality(&*w, &x, alpha, &p.minimizer, &probes);
        prop_assert!(margin >= -1e-7, "certificate margin {}", margin);
    }

    #[test]
    fn envelope_gradient_matches_differences((kind, slopes) in family(), x in point(), alpha in 0.2..3.0f64) {
        let w = weight(kind, &slopes);
        let env = MoreauEnvelope { inner: w.clone(), alpha, tol: 1e-12 };
        let g = env.subgradient(&x);
        let step = 1e-5;
        for i in 0..2 {
            let mut xp = x.clone();
            xp[i] += step;
            let mut xm = x.clone();
            xm[i] -= step;
            let fd = (env.value(&xp) - env.value(&xm)) / (2.0 * step);
            prop_assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1.0), "coord {}: fd {} vs {}", i, fd, g[i]);
        }
    }

    #[test]
    fn envelope_gradient_is_inverse_alpha_lipschitz((kind, slopes) in family(), x in point(), y in point(), alpha in 0.05..5.0f64) {
        let w = weight(kind, &slopes);
        let gx = prox_point(&*w, &x, alpha, TOL).unwrap().gradient;
        let gy = prox_point(&*w, &y, alpha, TOL).unwrap().gradient;
        let dg = ((gx[0] - gy[0]).powi(2) + (gx[1] - gy[1]).powi(2)).sqrt();
        let dx = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        prop_assert!(dg <= dx / alpha + 1e-6);
    }
}

#[test]
fn envelope_examples() {
    let q = Quadratic::new(vec![1.0]);
    assert!((moreau_envelope(&q, &[1.0], 1.0, TOL).unwrap() - 0.25).abs() < 1e-10);
    assert!((moreau_envelope(&q, &[2.0], 0.01, TOL).unwrap() - 4.0 / 2.02).abs() < 1e-10);
    let abs = L1 { dim: 1, scale: 1.0 };
    assert!((moreau_envelope(&abs, &[0.5], 1.0, TOL).unwrap() - 0.125).abs() < 1e-10);
    let p = prox_point(&abs, &[2.0], 1.0, TOL).unwrap();
    assert!((p.minimizer[0] + 1.0).abs() < 1e-10);
    assert!((p.envelope - 1.5).abs() < 1e-10);
}
