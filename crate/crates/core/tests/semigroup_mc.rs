use weighted_ou::functions::{Constant, Hermite, Profile, Ridge};
use weighted_ou::grid::{solve_elliptic_grid, GridSpec};
use weighted_ou::semigroup::{
    mehler_oracle, resolvent_apply, resolvent_derivatives, semigroup_apply, semigroup_gradient, simulate_terminal,
    DiffusionConfig, MehlerSpec,
};
use weighted_ou::weight::{Huber, Quadratic, Zero};
use weighted_ou::SmoothFn;

fn cfg(paths: usize, dt: f64, seed: u64) -> DiffusionConfig {
    DiffusionConfig { dt, paths, seed, ..DiffusionConfig::default() }
}

#[test]
fn stationary_law_of_zero_weight() {
    let pts = simulate_terminal(&Zero { dim: 2 }, &[1.0, -1.0], 6.0, &cfg(20_000, 1e-2, 3)).unwrap();
    for k in 0..2 {
        let xs: Vec<f64> = pts.iter().map(|p| p[k]).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let se_m = (v / xs.len() as f64).sqrt();
        let se_v = (2.0 / xs.len() as f64).sqrt();
        assert!(m.abs() <= 4.0 * se_m, "mean {m}");
        // Euler bias of the variance is O(dt).
        assert!((v - 1.0).abs() <= 4.0 * se_v + 1e-2, "variance {v}");
    }
}

#[test]
fn semigroup_examples() {
    let z = Zero { dim: 1 };
    let lin = Ridge::coordinate(Profile::Identity, 0);
    let v = semigroup_apply(&z, &lin, 1.0, &[2.0], &cfg(20_000, 1e-3, 1)).unwrap();
    assert!(v.agrees_with(2.0 * (-1.0f64).exp(), 3.0, 1e-3), "{v:?}");
    let cos = Ridge::new(Profile::Cos, vec![1.0], 0.0);
    let want = (-(1.0 - (-1.0f64).exp()) / 2.0).exp();
    let v = semigroup_apply(&z, &cos, 0.5, &[0.0], &cfg(20_000, 1e-3, 2)).unwrap();
    assert!(v.agrees_with(want, 3.0, 1e-3), "{v:?} vs {want}");
    let c = semigroup_apply(&Huber { dim: 1, delta: 1.0 }, &Constant(1.7), 0.8, &[0.3], &cfg(500, 1e-2, 0)).unwrap();
    assert_eq!(c.mean, 1.7);
    assert_eq!(c.std_error, 0.0);
}

#[test]
fn semigroup_gradient_bounds() {
    let z = Zero { dim: 1 };
    let lin = Ridge::coordinate(Profile::Identity, 0);
    let g = semigroup_gradient(&z, &lin, 0.7, &[0.4], &cfg(4000, 1e-2, 5), 0.05).unwrap();
    assert!(g[0].agrees_with((-0.7f64).exp(), 3.0, 1e-2), "{:?}", g[0]);
    let g = semigroup_gradient(&Huber { dim: 2, delta: 1.0 }, &Constant(2.0), 0.7, &[0.4, 0.0], &cfg(500, 1e-2, 5), 0.05).unwrap();
    assert!(g.iter().all(|v| v.mean == 0.0));
    let tanh = Ridge::coordinate(Profile::Tanh, 0);
    let g = semigroup_gradient(&z, &tanh, 1.0, &[0.0], &cfg(10_000, 1e-2, 6), 0.05).unwrap();
    assert!(g[0].mean.abs() <= 1.0 + 3.0 * g[0].std_error + g[0].bias_bound);
}

#[test]
fn resolvent_examples() {
    let z = Zero { dim: 1 };
    let c = resolvent_apply(&Quadratic::new(vec![1.0]), &Constant(3.0), 2.0, &[0.5], &cfg(200, 1e-2, 0)).unwrap();
    assert!((c.mean - 1.5).abs() <= c.bias_bound + 1e-12, "{c:?}");
    let lin = Ridge::coordinate(Profile::Identity, 0);
    let v = resolvent_apply(&z, &lin, 1.0, &[1.2], &cfg(4000, 2e-3, 1)).unwrap();
    assert!(v.agrees_with(0.6, 3.0, 5e-3), "{v:?}");
    let h2 = Hermite { k: 2, coord: 0 };
    let v = resolvent_apply(&z, &h2, 1.0, &[2.0], &cfg(20_000, 2e-3, 2)).unwrap();
    assert!(v.agrees_with(1.0, 3.0, 1e-2), "{v:?}");

    let d = resolvent_derivatives(&z, &lin, 1.0, &[0.3], &cfg(2000, 1e-2, 3), 0.05).unwrap();
    assert!(d.gradient[0].agrees_with(0.5, 3.0, 1e-2), "{:?}", d.gradient[0]);
    assert!(d.hessian[0].agrees_with(0.0, 3.0, 1e-2), "{:?}", d.hessian[0]);
    let d = resolvent_derivatives(&z, &Constant(1.0), 1.0, &[0.3], &cfg(200, 1e-2, 3), 0.05).unwrap();
    assert_eq!(d.gradient[0].mean, 0.0);
    assert_eq!(d.hessian[0].mean, 0.0);
}

#[test]
fn tanh_resolvent_gradient_against_grid() {
    let z = Zero { dim: 1 };
    let tanh = Ridge::coordinate(Profile::Tanh, 0);
    let d = resolvent_derivatives(&z, &tanh, 1.0, &[0.0], &cfg(10_000, 5e-3, 9), 0.05).unwrap();
    let g = &d.gradient[0];
    assert!(g.mean.abs() <= std::f64::consts::PI.sqrt() + 3.0 * g.std_error + g.bias_bound);
    let sol = solve_elliptic_grid(&z, &|x| tanh.value(x), 1.0, &GridSpec::new(1, 8.0, 1.0 / 128.0)).unwrap();
    let (_, grad, _) = sol.interpolate(&[0.0]).unwrap();
    assert!(g.agrees_with(grad[0], 3.0, 2e-2), "{g:?} vs grid {}", grad[0]);
}

#[test]
fn mehler_examples() {
    assert_eq!(mehler_oracle(&MehlerSpec::Linear(vec![1.0]), 0.0, &[2.0]), 2.0);
    let far = mehler_oracle(&MehlerSpec::Cosine(vec![1.0]), 40.0, &[1.3]);
    assert!((far - (-0.5f64).exp()).abs() < 1e-12);
    assert!(mehler_oracle(&MehlerSpec::Hermite(2), 2f64.ln(), &[1.0]).abs() < 1e-15);
}

#[test]
fn contraction_and_positivity() {
    let w = Huber { dim: 2, delta: 0.5 };
    let bump = Ridge::new(Profile::Logistic, vec![1.0, -0.5], 0.2);
    let pts = simulate_terminal(&w, &[0.5, 1.0], 0.6, &cfg(2000, 1e-2, 4)).unwrap();
    let vals: Vec<f64> = pts.iter().map(|p| bump.value(p)).collect();
    assert!(vals.iter().all(|v| *v >= 0.0 && *v <= 1.0));
    let r = resolvent_apply(&w, &bump, 0.5, &[0.5, 1.0], &cfg(2000, 1e-2, 4)).unwrap();
    assert!(r.mean >= 0.0 && r.mean <= 1.0 / 0.5 + r.bias_bound);
}
