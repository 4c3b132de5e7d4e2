use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use weighted_ou::functions::{Constant, Profile, Ridge};
use weighted_ou::grid::apply_generator;
use weighted_ou::sampling::ISConfig;
use weighted_ou::wiener::{
    cm_norm_sq, constant_field, energy_weight, ibp_residual, max_endpoint_weight, sample_path, weighted_divergence,
    CylindricalField, EnergyWeight, KLPathSample, MaxEndpointWeight, WienerBasis,
};
use weighted_ou::{ConvexWeight, FnRef};

#[test]
fn cameron_martin_norms() {
    assert!((cm_norm_sq(&[1.0]) - PI * PI / 4.0).abs() < 1e-12);
    assert!((cm_norm_sq(&[0.0, WienerBasis::eigenvalue(1).sqrt()]) - 1.0).abs() < 1e-14);
    assert_eq!(cm_norm_sq(&[]), 0.0);
}

#[test]
fn sampled_paths_start_at_zero_and_have_brownian_covariance() {
    let basis = WienerBasis::new(64);
    let grid = vec![0.0, 0.3, 0.5, 1.0];
    let n = 10_000;
    let (mut s55, mut s35, mut s11) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n as u64 {
        let p = sample_path(&basis, &grid, 21, i);
        assert_eq!(p.values[0], 0.0);
        s55.push(p.values[2] * p.values[2]);
        s35.push(p.values[1] * p.values[2]);
        s11.push(p.values[3] * p.values[3]);
    }
    // Truncation at 64 modes removes sum_{k >= 64} lambda_k ~ 3e-3 of the variance.
    for (xs, want) in [(&s55, 0.5), (&s35, 0.3), (&s11, 1.0)] {
        let v = weighted_ou::MCValue::from_samples(xs);
        assert!(v.agrees_with(want, 4.0, 4e-3), "{v:?} vs {want}");
    }
}

#[test]
fn max_endpoint_gradient_matches_difference_quotients() {
    let w = MaxEndpointWeight::new(8, 2001);
    let x = [1.5, -0.3, 0.2, 0.1, -0.05, 0.0, 0.02, 0.0];
    let g = w.subgradient(&x);
    let t = 1e-6;
    for k in 0..8 {
        let mut xp = x;
        xp[k] += t;
        let dq = (w.value(&xp) - w.value(&x)) / t;
        assert!((dq - g[k]).abs() < 1e-4, "mode {k}: {dq} vs {}", g[k]);
    }
}

#[test]
fn ramp_and_negative_ramp() {
    let grid = WienerBasis::uniform_grid(101);
    let e = max_endpoint_weight(&KLPathSample::from_values(grid.clone(), grid.clone()));
    assert_eq!((e.argmax, e.value), (1.0, 2.0));
    let neg: Vec<f64> = grid.iter().map(|s| -s).collect();
    let e = max_endpoint_weight(&KLPathSample::from_values(grid, neg));
    assert_eq!((e.argmax_index, e.value), (0, -1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn energy_gradient_is_lipschitz(a in prop::collection::vec(-2.0..2.0f64, 12), b in prop::collection::vec(-2.0..2.0f64, 12)) {
        // L2 coefficients c relate to H coordinates by c_k = sqrt(lambda_k) xi_k.
        let (_, ga) = energy_weight(&a);
        let (_, gb) = energy_weight(&b);
        let dg: f64 = ga.iter().zip(&gb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let dh = cm_norm_sq(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>()).sqrt();
        prop_assert!(dg <= 4.0 / PI * dh * (1.0 + 1e-12));
    }

    #[test]
    fn divergence_of_gradient_is_the_generator(xi in prop::collection::vec(-2.5..2.5f64, 3), a in prop::collection::vec(-1.0..1.0f64, 3)) {
        let u: FnRef = Arc::new(Ridge::new(Profile::Tanh, a, 0.2));
        let w = EnergyWeight::new(3);
        let div = weighted_divergence(&CylindricalField::Gradient(u.clone(), 3), &w, &xi);
        prop_assert!((div - apply_generator(&w, &*u, &xi)).abs() < 1e-13);
    }
}

#[test]
fn integration_by_parts_under_energy_weight() {
    let w = EnergyWeight::new(4);
    let mc = ISConfig { samples: 20_000, seed: 8 };
    let r = ibp_residual(&Constant(1.0), &constant_field(2, 1), &w, &mc);
    assert!(r.agrees_with(0.0, 3.0, 0.0), "{r:?}");
    let f = Ridge::new(Profile::Cos, vec![1.0, 0.5, 0.0, 0.0], 0.0);
    let phi: FnRef = Arc::new(Ridge::new(Profile::Logistic, vec![0.3, -1.0, 0.0, 0.0], 0.1));
    let field = CylindricalField::Components(vec![phi.clone(), phi]);
    let r = ibp_residual(&f, &field, &w, &mc);
    assert!(r.agrees_with(0.0, 3.0, 0.0), "{r:?}");
}
