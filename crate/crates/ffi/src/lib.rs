//! C ABI over the fibercryst library.
//!
//! Objects are opaque handles created by `fc_*_new`/`fc_*_solve`/`fc_*_sample`
//! and released by the matching `fc_*_free`. Every fallible call returns an
//! [`FcStatus`]; the message of the last failure on the calling thread is
//! available through [`fc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fibercryst::branches::{branch_roots, Regime};
use fibercryst::dynamics::{sample_normal_phase, ParticleEnsemble};
use fibercryst::stationary::{decompose, order_parameter, solve_branch, ContinuationOptions, FieldSolution};
use fibercryst::{stability, Error, Params};

/// Result codes shared by all functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Numerical = 3,
    Convergence = 4,
    BufferTooSmall = 5,
    Io = 6,
    Panic = 7,
}

/// Branch equation selector for [`fc_branch_roots`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcRegime {
    Weak = 0,
    Strong = 1,
    Averaged = 2,
}

impl From<FcRegime> for Regime {
    fn from(r: FcRegime) -> Self {
        match r {
            FcRegime::Weak => Regime::Weak,
            FcRegime::Strong => Regime::Strong,
            FcRegime::Averaged => Regime::Averaged,
        }
    }
}

/// Dimensionless parameters.
pub struct FcParams {
    inner: Params,
}

/// A converged stationary field on its grid.
pub struct FcField {
    inner: FieldSolution,
}

/// Particle positions and momenta.
pub struct FcEnsemble {
    inner: ParticleEnsemble,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FcStatus {
    match e {
        Error::Range(_) | Error::Domain(_) => FcStatus::Domain,
        Error::Convergence { .. } => FcStatus::Convergence,
        Error::Io(_) | Error::Csv(_) => FcStatus::Io,
        _ => FcStatus::Numerical,
    }
}

/// Run `f`, translating library errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (FcStatus, String)>>(f: F) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FcStatus::Ok,
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            FcStatus::Panic
        }
    }
}

fn lib<T>(r: fibercryst::Result<T>) -> Result<T, (FcStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (FcStatus, String) {
    (FcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (FcStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), (FcStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (nul-terminated,
/// truncated to `cap`). Returns the full message length in bytes, 0 if none.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fc_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && cap > 0 {
                let n = bytes.len().min(cap - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Critical pump ε_c = 1/(2ζ₀).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_critical_pump(zeta0: f64, out: *mut f64) -> FcStatus {
    guard(|| {
        let v = lib(fibercryst::model::critical_pump(zeta0))?;
        write(out, v, "out")
    })
}

/// # Safety
/// `out` must be a valid pointer; on success `*out` owns a new handle.
#[no_mangle]
pub unsafe extern "C" fn fc_params_new(zeta0: f64, eps: f64, ell: f64, n_max: usize, out: *mut *mut FcParams) -> FcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = lib(Params::new(zeta0, eps, ell, n_max))?;
        write(out, Box::into_raw(Box::new(FcParams { inner: p })), "out")
    })
}

/// # Safety
/// `p` must be null or a handle from [`fc_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_params_free(p: *mut FcParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Growth rate of mode `n`. `*unstable` is 1 and `*gamma` the rate when the
/// normal phase is unstable, otherwise 0 and 0.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_growth_rate(params: *const FcParams, n: usize, gamma: *mut f64, unstable: *mut i32) -> FcStatus {
    guard(|| {
        let p = deref(params, "params")?;
        if gamma.is_null() || unstable.is_null() {
            return Err(null("output"));
        }
        let m = lib(stability::growth_rate(n, &p.inner))?;
        write(gamma, m.map_or(0.0, |m| m.gamma), "gamma")?;
        write(unstable, i32::from(m.is_some()), "unstable")
    })
}

/// Ordered-branch roots Θ of branch `n`, ascending. `*len` receives the root
/// count; if it exceeds `cap` nothing is copied and the status is
/// `BufferTooSmall`.
///
/// # Safety
/// `out` must point to `cap` writable doubles (or be null with `cap` 0);
/// `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_branch_roots(
    regime: FcRegime,
    eps: f64,
    zeta0: f64,
    n: usize,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> FcStatus {
    guard(|| {
        if !(zeta0 > 0.0) || !(eps >= 0.0) {
            return Err((FcStatus::Domain, format!("need zeta0 > 0 and eps >= 0, got {zeta0}, {eps}")));
        }
        let roots = branch_roots(regime.into(), eps, zeta0, n);
        write(len, roots.len(), "len")?;
        if roots.len() > cap {
            return Err((FcStatus::BufferTooSmall, format!("{} roots, capacity {cap}", roots.len())));
        }
        if !roots.is_empty() && out.is_null() {
            return Err(null("out"));
        }
        for (i, (theta, _)) in roots.iter().enumerate() {
            *out.add(i) = *theta;
        }
        Ok(())
    })
}

/// Self-consistent stationary solution on branch `n` by continuation from
/// threshold. `ppw` is the number of grid points per wavelength (0 selects
/// the default).
///
/// # Safety
/// `params` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_field_solve(params: *const FcParams, n: usize, ppw: usize, out: *mut *mut FcField) -> FcStatus {
    guard(|| {
        let p = deref(params, "params")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut opts = ContinuationOptions::default();
        if ppw > 0 {
            opts.ppw = ppw;
        }
        let sol = lib(solve_branch(&p.inner, n, &opts))?;
        write(out, Box::into_raw(Box::new(FcField { inner: sol.solution })), "out")
    })
}

/// Number of grid points of a field.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_field_len(f: *const FcField) -> usize {
    f.as_ref().map_or(0, |f| f.inner.grid.n)
}

/// Order parameter averaged over the central half of the cloud.
///
/// # Safety
/// `f` must be a live handle and `theta` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_field_theta(f: *const FcField, theta: *mut f64) -> FcStatus {
    guard(|| {
        let f = deref(f, "field")?;
        write(theta, order_parameter(&decompose(&f.inner)).theta, "theta")
    })
}

/// Copies grid positions and the real and imaginary field parts. Each buffer
/// must hold [`fc_field_len`] doubles; any of them may be null to skip it.
///
/// # Safety
/// Non-null buffers must have room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_field_copy(f: *const FcField, xi: *mut f64, re: *mut f64, im: *mut f64, cap: usize) -> FcStatus {
    guard(|| {
        let f = &deref(f, "field")?.inner;
        let n = f.grid.n;
        if cap < n {
            return Err((FcStatus::BufferTooSmall, format!("{n} samples, capacity {cap}")));
        }
        for j in 0..n {
            if !xi.is_null() {
                *xi.add(j) = f.grid.xi(j);
            }
            if !re.is_null() {
                *re.add(j) = f.e[j].re;
            }
            if !im.is_null() {
                *im.add(j) = f.e[j].im;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_field_free(f: *mut FcField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Normal-phase sample of `n` particles (at least 1000).
///
/// # Safety
/// `params` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_sample(params: *const FcParams, n: usize, seed: u64, out: *mut *mut FcEnsemble) -> FcStatus {
    guard(|| {
        let p = deref(params, "params")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = lib(sample_normal_phase(n, &p.inner, seed))?;
        write(out, Box::into_raw(Box::new(FcEnsemble { inner: e })), "out")
    })
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_len(e: *const FcEnsemble) -> usize {
    e.as_ref().map_or(0, |e| e.inner.len())
}

/// Bunching |Σ e^{2iξ}|/N.
///
/// # Safety
/// `e` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_bunching(e: *const FcEnsemble, out: *mut f64) -> FcStatus {
    guard(|| write(out, deref(e, "ensemble")?.inner.bunching(), "out"))
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_free(e: *mut FcEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}
