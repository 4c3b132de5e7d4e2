//! C ABI over `weighted_ou`.
//!
//! Every function returns a [`WouStatus`]; on failure the message is
//! available from [`wou_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use weighted_ou::functions::{named_test_function, FnRef};
use weighted_ou::prox::{prox_point_with, ProxOptions};
use weighted_ou::semigroup::{resolvent_apply, semigroup_apply, DiffusionConfig};
use weighted_ou::weight::{parse_weight, WeightRef};
use weighted_ou::wiener::{cm_norm_sq, EnergyWeight, WienerBasis};
use weighted_ou::{Error, MCValue};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WouStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    NonConvergence = 3,
    Numerical = 4,
    Panic = 5,
}

/// Opaque convex weight.
pub struct WouWeight(WeightRef);

/// Opaque test function.
pub struct WouTestFn(FnRef);

/// Monte Carlo estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WouMcValue {
    pub mean: f64,
    pub std_error: f64,
    /// Deterministic allowance (quadrature tail), 0 when not applicable.
    pub bias_bound: f64,
    pub paths_used: u64,
}

impl From<MCValue> for WouMcValue {
    fn from(v: MCValue) -> Self {
        WouMcValue { mean: v.mean, std_error: v.std_error, bias_bound: v.bias_bound, paths_used: v.paths_used as u64 }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> WouStatus {
    match e {
        Error::Domain(_) | Error::Config(_) => WouStatus::Domain,
        Error::NonConvergence { .. } => WouStatus::NonConvergence,
        Error::NonFinite(_) | Error::Singular(_) | Error::Io(_) => WouStatus::Numerical,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WouStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WouStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            WouStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            set_error(&format!("panic: {}", msg.unwrap_or_default()));
            WouStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Fail::Lib(Error::Domain(format!("{what}: {e}"))))
}

unsafe fn put<T>(out: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(v);
    Ok(())
}

fn check_dim(expected: usize, got: usize) -> Result<(), Fail> {
    if expected != got {
        return Err(Fail::Lib(Error::Domain(format!("point has {got} coordinates, weight has {expected}"))));
    }
    Ok(())
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn wou_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn wou_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Weight from a descriptor (`zero`, `quadratic:1,2`, `linear:..`, `l1[:s]`,
/// `huber[:delta]`) in dimension `dim`.
///
/// # Safety
/// `desc` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wou_weight_new(desc: *const c_char, dim: usize, out: *mut *mut WouWeight) -> WouStatus {
    guard(|| {
        let d = text(desc, "desc")?;
        if dim == 0 {
            return Err(Error::Domain("dim must be positive".into()).into());
        }
        let w = parse_weight(d, dim)?;
        put(out, Box::into_raw(Box::new(WouWeight(w))), "out")
    })
}

/// The Wiener energy weight on `modes` Karhunen-Loeve coordinates.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wou_weight_energy(modes: usize, out: *mut *mut WouWeight) -> WouStatus {
    guard(|| {
        if modes == 0 {
            return Err(Error::Domain("modes must be positive".into()).into());
        }
        put(out, Box::into_raw(Box::new(WouWeight(Arc::new(EnergyWeight::new(modes))))), "out")
    })
}

/// # Safety
/// `w` must come from a `wou_weight_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wou_weight_free(w: *mut WouWeight) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// # Safety
/// `w` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wou_weight_dim(w: *const WouWeight, out: *mut usize) -> WouStatus {
    guard(|| {
        let w = w.as_ref().ok_or(Fail::Null("w"))?;
        put(out, w.0.dim(), "out")
    })
}

/// Value at `x` and, if `grad` is non-null, a subgradient (length `n`).
///
/// # Safety
/// `x` (and `grad` when non-null) must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn wou_weight_eval(w: *const WouWeight, x: *const f64, n: usize, value: *mut f64, grad: *mut f64) -> WouStatus {
    guard(|| {
        let w = w.as_ref().ok_or(Fail::Null("w"))?;
        let x = slice(x, n, "x")?;
        check_dim(w.0.dim(), n)?;
        let mut g = vec![0.0; n];
        let v = w.0.value_and_subgradient(x, &mut g);
        if !grad.is_null() {
            slice_mut(grad, n, "grad")?.copy_from_slice(&g);
        }
        put(value, v, "value")
    })
}

/// Proximal point `P(x, alpha)`, envelope `f_alpha(x)` and its gradient
/// `-P / alpha`. `minimizer` and `gradient` hold `n` doubles each; either may
/// be null.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn wou_prox(
    w: *const WouWeight,
    x: *const f64,
    n: usize,
    alpha: f64,
    minimizer: *mut f64,
    envelope: *mut f64,
    gradient: *mut f64,
) -> WouStatus {
    guard(|| {
        let w = w.as_ref().ok_or(Fail::Null("w"))?;
        let x = slice(x, n, "x")?;
        check_dim(w.0.dim(), n)?;
        let r = prox_point_with(&*w.0, x, alpha, &ProxOptions::default())?;
        if !minimizer.is_null() {
            slice_mut(minimizer, n, "minimizer")?.copy_from_slice(&r.minimizer);
        }
        if !gradient.is_null() {
            slice_mut(gradient, n, "gradient")?.copy_from_slice(&r.gradient);
        }
        put(envelope, r.envelope, "envelope")
    })
}

/// Test function by name (`const`, `tanh`, `tanh_slow`, `cos`, `indicator`,
/// `linear`, `hermite2`) for an `n`-dimensional truncation.
///
/// # Safety
/// `name` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wou_testfn_new(name: *const c_char, n: usize, out: *mut *mut WouTestFn) -> WouStatus {
    guard(|| {
        let f = named_test_function(text(name, "name")?, n.max(1))?;
        put(out, Box::into_raw(Box::new(WouTestFn(f))), "out")
    })
}

/// # Safety
/// `f` must come from `wou_testfn_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wou_testfn_free(f: *mut WouTestFn) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// # Safety
/// `x` must hold `n` doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wou_testfn_eval(f: *const WouTestFn, x: *const f64, n: usize, out: *mut f64) -> WouStatus {
    guard(|| {
        let f = f.as_ref().ok_or(Fail::Null("f"))?;
        let x = slice(x, n, "x")?;
        if n < f.0.active_dim() {
            return Err(Error::Domain(format!("function needs {} coordinates", f.0.active_dim())).into());
        }
        put(out, f.0.value(x), "out")
    })
}

fn diffusion(dt: f64, paths: usize, seed: u64) -> DiffusionConfig {
    DiffusionConfig { dt, paths, seed, ..DiffusionConfig::default() }
}

/// Monte Carlo `T_t f(x)` for the diffusion with drift `-(grad w + x)`.
///
/// # Safety
/// Handles live, `x` holds `n` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wou_semigroup(
    w: *const WouWeight,
    f: *const WouTestFn,
    t: f64,
    x: *const f64,
    n: usize,
    dt: f64,
    paths: usize,
    seed: u64,
    out: *mut WouMcValue,
) -> WouStatus {
    guard(|| {
        let w = w.as_ref().ok_or(Fail::Null("w"))?;
        let f = f.as_ref().ok_or(Fail::Null("f"))?;
        let x = slice(x, n, "x")?;
        check_dim(w.0.dim(), n)?;
        let v = semigroup_apply(&*w.0, &*f.0, t, x, &diffusion(dt, paths, seed))?;
        put(out, v.into(), "out")
    })
}

/// Monte Carlo `R(lambda) f(x)`; `bias_bound` carries the truncation tail.
///
/// # Safety
/// Handles live, `x` holds `n` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wou_resolvent(
    w: *const WouWeight,
    f: *const WouTestFn,
    lambda: f64,
    x: *const f64,
    n: usize,
    dt: f64,
    paths: usize,
    seed: u64,
    out: *mut WouMcValue,
) -> WouStatus {
    guard(|| {
        let w = w.as_ref().ok_or(Fail::Null("w"))?;
        let f = f.as_ref().ok_or(Fail::Null("f"))?;
        let x = slice(x, n, "x")?;
        check_dim(w.0.dim(), n)?;
        let v = resolvent_apply(&*w.0, &*f.0, lambda, x, &diffusion(dt, paths, seed))?;
        put(out, v.into(), "out")
    })
}

/// `lambda_k = 4 / (pi^2 (2k + 1)^2)`, zero-based `k`.
///
/// # Safety
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wou_wiener_eigenvalue(k: usize, out: *mut f64) -> WouStatus {
    guard(|| put(out, WienerBasis::eigenvalue(k), "out"))
}

/// Cameron-Martin norm squared from `L2[0,1]` sine-basis coefficients.
///
/// # Safety
/// `coeffs` holds `n` doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wou_cm_norm_sq(coeffs: *const f64, n: usize, out: *mut f64) -> WouStatus {
    guard(|| put(out, cm_norm_sq(slice(coeffs, n, "coeffs")?), "out"))
}
