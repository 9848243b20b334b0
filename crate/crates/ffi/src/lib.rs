//! C interface. Objects are opaque heap handles released by their `_free`
//! function; every fallible call returns an [`RmtStatus`] and writes its
//! result through an out-pointer, which is left untouched on failure.
//! The message of the last failure on the calling thread is available from
//! [`rmt_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rmtrate::freeconv::{add_conv, mul_conv};
use rmtrate::rankone::{rk1rk1_rate, Rk1PlusRk1};
use rmtrate::ratefn::{psi_one_matrix, rate_prod, rate_sum, RateCurve};
use rmtrate::spectra::{Ensemble, SpectralDensity};
use rmtrate::Error;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    OutOfSupport = 3,
    DomainExceeded = 4,
    NonConvergence = 5,
    DegenerateDensity = 6,
    InvalidShapeRatio = 7,
    InsufficientTail = 8,
    Io = 9,
    Panic = 10,
}

/// Opaque ensemble handle.
pub struct RmtEnsemble {
    inner: Ensemble,
}

/// Opaque rate-curve handle.
pub struct RmtRateCurve {
    inner: RateCurve,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RmtStatus {
    match e {
        Error::OutOfSupport { .. } => RmtStatus::OutOfSupport,
        Error::DomainExceeded { .. } => RmtStatus::DomainExceeded,
        Error::NonConvergence(_) => RmtStatus::NonConvergence,
        Error::DegenerateDensity(_) => RmtStatus::DegenerateDensity,
        Error::InvalidShapeRatio(_) => RmtStatus::InvalidShapeRatio,
        Error::InsufficientTail(_) => RmtStatus::InsufficientTail,
        Error::InvalidInput(_) => RmtStatus::InvalidInput,
        Error::Io(_) => RmtStatus::Io,
    }
}

/// Runs `f`, storing its value in `out`; converts errors and panics.
fn guard<T, F>(out: *mut T, f: F) -> RmtStatus
where
    F: FnOnce() -> rmtrate::Result<T>,
{
    if out.is_null() {
        set_error("null output pointer");
        return RmtStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => {
            // SAFETY: `out` is non-null and the caller guarantees it is writable.
            unsafe { out.write(v) };
            RmtStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(&format!("{}: {e}", e.kind()));
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            RmtStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a live handle produced by this library.
unsafe fn borrow<'a, T>(p: *const T) -> rmtrate::Result<&'a T> {
    p.as_ref().ok_or_else(|| Error::InvalidInput("null handle".into()))
}

fn boxed(e: Ensemble) -> *mut RmtEnsemble {
    Box::into_raw(Box::new(RmtEnsemble { inner: e }))
}

/// Applies the wall convention: `NaN` puts the wall at the edge, `+∞` keeps
/// none, any other value is the wall position.
fn place_wall(e: Ensemble, wall: f64) -> rmtrate::Result<Ensemble> {
    if wall.is_nan() {
        let w = e.edge();
        e.with_wall(w)
    } else if wall == f64::INFINITY {
        Ok(e)
    } else {
        e.with_wall(wall)
    }
}

/// GOE with semicircle of radius `2σ`. `wall` is `NaN` for a wall at the
/// edge, `+∞` for none, otherwise its position.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn rmt_ensemble_new_goe(sigma: f64, wall: f64, out: *mut *mut RmtEnsemble) -> RmtStatus {
    guard(out, || Ok(boxed(place_wall(Ensemble::goe(sigma)?, wall)?)))
}

/// White Wishart of ratio `q ∈ (0, 1]`; `wall` as for the GOE.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn rmt_ensemble_new_wishart(q: f64, wall: f64, out: *mut *mut RmtEnsemble) -> RmtStatus {
    guard(out, || Ok(boxed(place_wall(Ensemble::wishart(q)?, wall)?)))
}

/// Point mass at `a` with a wall at `wall ≥ a` (`NaN` for `a`).
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn rmt_ensemble_new_dirac(a: f64, wall: f64, out: *mut *mut RmtEnsemble) -> RmtStatus {
    guard(out, || {
        if wall == f64::INFINITY {
            return Err(Error::InvalidInput("a point mass needs a finite wall".into()));
        }
        Ok(boxed(place_wall(Ensemble::fixed(SpectralDensity::dirac(a)?), wall)?))
    })
}

/// Fixed diagonal whose spectrum is the piecewise-linear density through
/// `len` nodes; the wall sits at the top of the support.
///
/// # Safety
/// `grid` and `values` must point to `len` readable doubles; `out` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn rmt_ensemble_new_tabulated(
    grid: *const f64,
    values: *const f64,
    len: usize,
    out: *mut *mut RmtEnsemble,
) -> RmtStatus {
    guard(out, || {
        if grid.is_null() || values.is_null() {
            return Err(Error::InvalidInput("null density arrays".into()));
        }
        let g = std::slice::from_raw_parts(grid, len).to_vec();
        let v = std::slice::from_raw_parts(values, len).to_vec();
        Ok(boxed(Ensemble::fixed(SpectralDensity::tabulated(g, v)?)))
    })
}

/// # Safety
/// `e` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rmt_ensemble_free(e: *mut RmtEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Principal Stieltjes transform at `z ≥ a₊`.
///
/// # Safety
/// `e` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn rmt_stieltjes(e: *const RmtEnsemble, z: f64, out: *mut f64) -> RmtStatus {
    guard(out, || borrow(e)?.inner.g(z))
}

/// One-matrix rate of the top eigenvalue; `+∞` outside `[a₊, w]`.
///
/// # Safety
/// `e` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn rmt_psi_one(e: *const RmtEnsemble, x: f64, out: *mut f64) -> RmtStatus {
    guard(out, || psi_one_matrix(&borrow(e)?.inner, x))
}

/// Rate curve of the top eigenvalue of `A + OBOᵀ`. The ensembles are
/// copied; they may be freed afterwards.
///
/// # Safety
/// `a`, `b` must be live handles; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn rmt_rate_sum_new(
    a: *const RmtEnsemble,
    b: *const RmtEnsemble,
    out: *mut *mut RmtRateCurve,
) -> RmtStatus {
    guard(out, || {
        let conv = add_conv(borrow(a)?.inner.clone(), borrow(b)?.inner.clone())?;
        Ok(Box::into_raw(Box::new(RmtRateCurve {
            inner: rate_sum(&conv)?,
        })))
    })
}

/// Rate curve of the top eigenvalue of `A^{1/2}OBOᵀA^{1/2}`.
///
/// # Safety
/// `a`, `b` must be live handles; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn rmt_rate_prod_new(
    a: *const RmtEnsemble,
    b: *const RmtEnsemble,
    out: *mut *mut RmtRateCurve,
) -> RmtStatus {
    guard(out, || {
        let conv = mul_conv(borrow(a)?.inner.clone(), borrow(b)?.inner.clone())?;
        Ok(Box::into_raw(Box::new(RmtRateCurve {
            inner: rate_prod(&conv)?,
        })))
    })
}

/// # Safety
/// `c` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn rmt_rate_curve_eval(c: *const RmtRateCurve, x: f64, out: *mut f64) -> RmtStatus {
    guard(out, || borrow(c)?.inner.eval(x))
}

/// Typical edge, both critical points and the hard bound, in that order.
///
/// # Safety
/// `c` must be a live handle; `out` must be null or point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rmt_rate_curve_bounds(c: *const RmtRateCurve, out: *mut f64) -> RmtStatus {
    guard(out.cast::<[f64; 4]>(), || {
        let c = &borrow(c)?.inner;
        Ok([c.c_plus, c.x_c1, c.x_c2, c.hard_bound])
    })
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rmt_rate_curve_free(c: *mut RmtRateCurve) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Large-`n` rate of the top eigenvalue of `w_A·aaᵀ + w_B·bbᵀ`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn rmt_rk1rk1_rate(wa: f64, wb: f64, x: f64, out: *mut f64) -> RmtStatus {
    guard(out, || Ok(rk1rk1_rate(&Rk1PlusRk1::new(wa, wb)?, x)))
}

/// Message of the last failure on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rmt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn rmt_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version has an interior nul"),
    };
    VERSION.as_ptr()
}
