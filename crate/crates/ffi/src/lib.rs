//! C interface to `smoothing-lab`.
//!
//! Models and pools are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns an
//! [`SlStatus`]; on failure `sl_last_error_message` describes the error
//! raised on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use smoothing_lab::cascade::{self, SamplePool};
use smoothing_lab::matrix::{hennion_distance, spectral_radius};
use smoothing_lab::{spectral, Direction, Error, ModelSpec, NonNegMatrix};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an out-of-range argument.
    InvalidArgument = 1,
    /// Invalid model or input data.
    InputError = 2,
    /// A computation did not produce a result.
    ComputationError = 3,
    /// A node or element budget was exhausted.
    BudgetExceeded = 4,
    /// Internal panic caught at the boundary.
    Panic = 5,
}

/// Opaque validated model.
pub struct SlModel {
    spec: ModelSpec,
}

/// Opaque pool of samples, row-major.
pub struct SlPool {
    pool: SamplePool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: SlStatus, msg: &str) -> SlStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> SlStatus {
    let status = match e.exit_code() {
        2 => SlStatus::InputError,
        4 => SlStatus::BudgetExceeded,
        _ => SlStatus::ComputationError,
    };
    fail(status, &e.to_string())
}

fn guard(f: impl FnOnce() -> SlStatus) -> SlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SlStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, SlStatus> {
    if p.is_null() {
        return Err(fail(SlStatus::InvalidArgument, &format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(SlStatus::InvalidArgument, &format!("{what} is not UTF-8")))
}

macro_rules! try_arg {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! not_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(SlStatus::InvalidArgument, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message of the last error on this thread; empty when none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn sl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a model from a JSON document.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_model_from_json(json: *const c_char, out: *mut *mut SlModel) -> SlStatus {
    guard(|| {
        not_null!(out);
        let text = try_arg!(str_arg(json, "json"));
        match ModelSpec::from_json(text) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(SlModel { spec }));
                SlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Load a model file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_model_from_file(path: *const c_char, out: *mut *mut SlModel) -> SlStatus {
    guard(|| {
        not_null!(out);
        let path = try_arg!(str_arg(path, "path"));
        match ModelSpec::load(Path::new(path)) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(SlModel { spec }));
                SlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must come from `sl_model_from_*` and not be freed twice; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sl_model_free(model: *mut SlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_model_dim(model: *const SlModel, out: *mut usize) -> SlStatus {
    guard(|| {
        not_null!(model, out);
        *out = (*model).spec.dim();
        SlStatus::Ok
    })
}

/// `m(1) = E[N] r(E[A₁])`, computed exactly.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_model_m_one(model: *const SlModel, out: *mut f64) -> SlStatus {
    guard(|| {
        not_null!(model, out);
        *out = (*model).spec.m_one();
        SlStatus::Ok
    })
}

/// `κ(1) = r(E[A₁])`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_kappa_one_exact(model: *const SlModel, out: *mut f64) -> SlStatus {
    guard(|| {
        not_null!(model, out);
        *out = spectral::kappa_one_exact(&(*model).spec);
        SlStatus::Ok
    })
}

unsafe fn matrix_arg(data: *const f64, dim: usize) -> Result<NonNegMatrix, SlStatus> {
    if data.is_null() || dim == 0 {
        return Err(fail(SlStatus::InvalidArgument, "matrix data is null or dim is 0"));
    }
    let v = std::slice::from_raw_parts(data, dim * dim).to_vec();
    NonNegMatrix::from_row_major(dim, v).map_err(from_error)
}

unsafe fn direction_arg(data: *const f64, dim: usize) -> Result<Direction, SlStatus> {
    if data.is_null() || dim == 0 {
        return Err(fail(SlStatus::InvalidArgument, "vector data is null or dim is 0"));
    }
    Direction::new(std::slice::from_raw_parts(data, dim).to_vec()).map_err(from_error)
}

/// Spectral radius of a nonnegative `dim x dim` matrix given row-major.
///
/// # Safety
/// `data` must point to `dim * dim` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_spectral_radius(data: *const f64, dim: usize, out: *mut f64) -> SlStatus {
    guard(|| {
        not_null!(out);
        let m = try_arg!(matrix_arg(data, dim));
        *out = spectral_radius(&m);
        SlStatus::Ok
    })
}

/// Hennion distance between the directions of two nonnegative vectors.
///
/// # Safety
/// `x` and `y` must point to `dim` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_hennion_distance(x: *const f64, y: *const f64, dim: usize, out: *mut f64) -> SlStatus {
    guard(|| {
        not_null!(out);
        let x = try_arg!(direction_arg(x, dim));
        let y = try_arg!(direction_arg(y, dim));
        *out = hennion_distance(&x, &y);
        SlStatus::Ok
    })
}

/// Critical exponent `a₀` of the singleton-branch operator. `*found` is 0
/// when `P[N = 1] = 0` and `*out` is left untouched.
///
/// # Safety
/// `model` must be a live handle; `out` and `found` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sl_critical_exponent(
    model: *const SlModel,
    grid_size: usize,
    out: *mut f64,
    found: *mut i32,
) -> SlStatus {
    guard(|| {
        not_null!(model, out, found);
        match spectral::critical_exponent(&(*model).spec, 1e-12, grid_size, 10.0) {
            Ok(Some(a)) => {
                *out = a;
                *found = 1;
                SlStatus::Ok
            }
            Ok(None) => {
                *found = 0;
                SlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Run `rounds` fixed-point iterations on a pool of `k` samples starting
/// from `init` (`dim` values), or from the Perron vector of `E[Σ A_i]`
/// when `init` is null.
///
/// # Safety
/// `model` must be a live handle, `init` null or `dim` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sl_run_fixed_point(
    model: *const SlModel,
    k: usize,
    rounds: usize,
    init: *const f64,
    seed: u64,
    out: *mut *mut SlPool,
) -> SlStatus {
    guard(|| {
        not_null!(model, out);
        let spec = &(*model).spec;
        let init = if init.is_null() {
            match cascade::default_init(spec) {
                Ok(v) => v,
                Err(e) => return from_error(e),
            }
        } else {
            std::slice::from_raw_parts(init, spec.dim()).to_vec()
        };
        match cascade::run_fixed_point(spec, k, rounds, &init, seed) {
            Ok(run) => {
                *out = Box::into_raw(Box::new(SlPool { pool: run.pool }));
                SlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `pool` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_pool_len(pool: *const SlPool, out: *mut usize) -> SlStatus {
    guard(|| {
        not_null!(pool, out);
        *out = (*pool).pool.len();
        SlStatus::Ok
    })
}

/// # Safety
/// `pool` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_pool_dim(pool: *const SlPool, out: *mut usize) -> SlStatus {
    guard(|| {
        not_null!(pool, out);
        *out = (*pool).pool.dim();
        SlStatus::Ok
    })
}

/// Copy the samples row-major into `buf`, which must hold `len * dim` values.
///
/// # Safety
/// `pool` must be a live handle and `buf` point to `buf_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sl_pool_copy(pool: *const SlPool, buf: *mut f64, buf_len: usize) -> SlStatus {
    guard(|| {
        not_null!(pool, buf);
        let data = (*pool).pool.as_flat();
        if buf_len < data.len() {
            return fail(SlStatus::InvalidArgument, &format!("buffer holds {buf_len} values, need {}", data.len()));
        }
        std::ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        SlStatus::Ok
    })
}

/// # Safety
/// `pool` must come from `sl_run_fixed_point` and not be freed twice; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sl_pool_free(pool: *mut SlPool) {
    if !pool.is_null() {
        drop(Box::from_raw(pool));
    }
}
