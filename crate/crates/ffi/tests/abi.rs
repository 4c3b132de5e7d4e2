use std::ffi::{CStr, CString};
use std::ptr;

use weighted_ou_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(wou_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn weight_lifecycle_and_prox() {
    let desc = CString::new("huber:1").unwrap();
    let mut w = ptr::null_mut();
    unsafe {
        assert_eq!(wou_weight_new(desc.as_ptr(), 1, &mut w), WouStatus::Ok);
        let mut dim = 0;
        assert_eq!(wou_weight_dim(w, &mut dim), WouStatus::Ok);
        assert_eq!(dim, 1);
        let (mut p, mut env, mut g) = (0.0, 0.0, 0.0);
        // Huber(delta=1) at x=3, alpha=1: h = -1, envelope huber(2) + 1/2 = 2.
        assert_eq!(wou_prox(w, [3.0].as_ptr(), 1, 1.0, &mut p, &mut env, &mut g), WouStatus::Ok);
        assert!((p + 1.0).abs() < 1e-8, "{p}");
        assert!((env - 2.0).abs() < 1e-8, "{env}");
        assert!((g - 1.0).abs() < 1e-8);
        let mut v = 0.0;
        let mut grad = [0.0];
        assert_eq!(wou_weight_eval(w, [0.5].as_ptr(), 1, &mut v, grad.as_mut_ptr()), WouStatus::Ok);
        assert_eq!((v, grad[0]), (0.125, 0.5));
        wou_weight_free(w);
    }
}

#[test]
fn errors_are_reported() {
    let bad = CString::new("nonsense").unwrap();
    let mut w = ptr::null_mut();
    unsafe {
        assert_eq!(wou_weight_new(bad.as_ptr(), 2, &mut w), WouStatus::Domain);
        assert!(w.is_null());
        assert!(last_error().contains("nonsense"), "{}", last_error());
        assert_eq!(wou_weight_new(ptr::null(), 2, &mut w), WouStatus::NullPointer);
        let z = CString::new("zero").unwrap();
        assert_eq!(wou_weight_new(z.as_ptr(), 2, &mut w), WouStatus::Ok);
        let mut v = 0.0;
        // Wrong point dimension.
        assert_eq!(wou_weight_eval(w, [1.0].as_ptr(), 1, &mut v, ptr::null_mut()), WouStatus::Domain);
        assert_eq!(wou_weight_eval(w, [1.0, 2.0].as_ptr(), 2, ptr::null_mut(), ptr::null_mut()), WouStatus::NullPointer);
        wou_weight_free(w);
        wou_weight_free(ptr::null_mut());
    }
}

#[test]
fn semigroup_and_resolvent_match_closed_forms() {
    let z = CString::new("zero").unwrap();
    let lin = CString::new("linear").unwrap();
    let mut w = ptr::null_mut();
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(wou_weight_new(z.as_ptr(), 1, &mut w), WouStatus::Ok);
        assert_eq!(wou_testfn_new(lin.as_ptr(), 1, &mut f), WouStatus::Ok);
        let mut fx = 0.0;
        assert_eq!(wou_testfn_eval(f, [0.7].as_ptr(), 1, &mut fx), WouStatus::Ok);
        assert_eq!(fx, 0.7);
        let mut out = WouMcValue::default();
        assert_eq!(wou_semigroup(w, f, 1.0, [1.0].as_ptr(), 1, 1e-2, 4000, 3, &mut out), WouStatus::Ok);
        // T_t x = x e^{-t} for the standard OU semigroup.
        assert!((out.mean - (-1f64).exp()).abs() < 4.0 * out.std_error + 0.01, "{out:?}");
        assert_eq!(out.paths_used, 4000);
        assert_eq!(wou_resolvent(w, f, 1.0, [1.0].as_ptr(), 1, 1e-2, 2000, 3, &mut out), WouStatus::Ok);
        // R(1) x = x / 2.
        assert!((out.mean - 0.5).abs() < 4.0 * out.std_error + out.bias_bound + 0.01, "{out:?}");
        assert_eq!(wou_resolvent(w, f, -1.0, [1.0].as_ptr(), 1, 1e-2, 2000, 3, &mut out), WouStatus::Domain);
        wou_testfn_free(f);
        wou_weight_free(w);
    }
}

#[test]
fn wiener_helpers() {
    let mut l = 0.0;
    let mut cm = 0.0;
    unsafe {
        assert_eq!(wou_wiener_eigenvalue(0, &mut l), WouStatus::Ok);
        assert!((l - 4.0 / std::f64::consts::PI.powi(2)).abs() < 1e-15);
        assert_eq!(wou_cm_norm_sq([1.0].as_ptr(), 1, &mut cm), WouStatus::Ok);
        assert!((cm - std::f64::consts::PI.powi(2) / 4.0).abs() < 1e-12);
        let mut w = ptr::null_mut();
        assert_eq!(wou_weight_energy(4, &mut w), WouStatus::Ok);
        let mut v = 0.0;
        assert_eq!(wou_weight_eval(w, [1.0, 0.0, 0.0, 0.0].as_ptr(), 4, &mut v, ptr::null_mut()), WouStatus::Ok);
        assert!((v - l).abs() < 1e-15);
        wou_weight_free(w);
        assert!(!CStr::from_ptr(wou_version()).to_bytes().is_empty());
    }
}
