//! C interface to `quadbath`.
//!
//! Handles are opaque and owned by the caller: every `*_new`/`*_compute`
//! success must be paired with the matching `*_free`. Functions return a
//! [`QbStatus`]; on failure the message is available from
//! [`qb_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use quadbath::closedform::pn_laguerre_all;
use quadbath::coefficients::{big_z, eta, propagate};
use quadbath::error::Error;
use quadbath::genfunc::{rho_matrix, ReducedDensityMatrix, RhoOptions};
use quadbath::model::{validate_spec, BathMode, BathSpec, DriveSpec, SystemSpec};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidSpec = 2,
    Config = 3,
    Unsupported = 4,
    OutOfRange = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Scenario under construction. Validated when it is used.
pub struct QbSpec {
    spec: SystemSpec,
}

/// A computed reduced density matrix of dimension `n_cut + 1`.
pub struct QbRho {
    rho: ReducedDensityMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> QbStatus {
    match err {
        Error::InvalidSpec(_) | Error::ResonantDrive { .. } => QbStatus::InvalidSpec,
        Error::Unsupported(_) => QbStatus::Unsupported,
        Error::OutOfRange { .. } => QbStatus::OutOfRange,
        Error::Config(_) | Error::Io(_) | Error::DimensionCeiling { .. } | Error::CutoffTooSmallForTemperature { .. } => {
            QbStatus::Config
        }
        _ => QbStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), QbStatus>) -> QbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QbStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            QbStatus::Panic
        }
    }
}

fn lib<T>(r: quadbath::error::Result<T>) -> Result<T, QbStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null(what: &str) -> QbStatus {
    set_error(format!("{what} is null"));
    QbStatus::NullPointer
}

unsafe fn spec_ref<'a>(spec: *const QbSpec) -> Result<&'a QbSpec, QbStatus> {
    spec.as_ref().ok_or_else(|| null("spec"))
}

unsafe fn spec_mut<'a>(spec: *mut QbSpec) -> Result<&'a mut QbSpec, QbStatus> {
    spec.as_mut().ok_or_else(|| null("spec"))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Isolated, undriven oscillator with two-photon coupling `φ = i·phi_im` at
/// inverse temperature `beta` (`INFINITY` for zero temperature).
///
/// # Safety
/// `out` must be a valid pointer to a `QbSpec*`.
#[no_mangle]
pub unsafe extern "C" fn qb_spec_new(omega0: f64, phi_im: f64, beta: f64, out: *mut *mut QbSpec) -> QbStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let spec = SystemSpec { phi: Complex64::new(0.0, phi_im), beta, ..SystemSpec::free(omega0) };
        let spec = lib(validate_spec(&spec))?;
        *out = Box::into_raw(Box::new(QbSpec { spec }));
        Ok(())
    })
}

/// Parses a scenario in the `quadbath` TOML format; only the physical
/// sections are used.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` a valid `QbSpec*` slot.
#[no_mangle]
pub unsafe extern "C" fn qb_spec_from_toml(toml: *const c_char, out: *mut *mut QbSpec) -> QbStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|e| {
            set_error(format!("toml is not UTF-8: {e}"));
            QbStatus::Config
        })?;
        let spec = lib(quadbath::cli::parse_config(text, &[]).and_then(|c| c.spec()))?;
        *out = Box::into_raw(Box::new(QbSpec { spec }));
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn qb_spec_free(spec: *mut QbSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// `k(t) = k0 sin(ν t)`.
///
/// # Safety
/// `spec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qb_spec_set_sinusoidal_drive(spec: *mut QbSpec, k0: f64, nu: f64) -> QbStatus {
    guard(|| {
        spec_mut(spec)?.spec.drive = DriveSpec::Sinusoidal { k0, nu };
        Ok(())
    })
}

/// Appends a discrete bath mode. Replaces a memoryless bath.
///
/// # Safety
/// `spec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qb_spec_add_bath_mode(spec: *mut QbSpec, omega: f64, coupling_re: f64, coupling_im: f64) -> QbStatus {
    guard(|| {
        let s = &mut spec_mut(spec)?.spec;
        let mode = BathMode { omega, coupling: Complex64::new(coupling_re, coupling_im) };
        match &mut s.bath {
            BathSpec::Discrete(modes) => modes.push(mode),
            b => *b = BathSpec::Discrete(vec![mode]),
        }
        Ok(())
    })
}

/// `χ(t) = χ₀ δ(t)`. Replaces any discrete modes.
///
/// # Safety
/// `spec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qb_spec_set_memoryless_bath(spec: *mut QbSpec, chi0: f64) -> QbStatus {
    guard(|| {
        spec_mut(spec)?.spec.bath = BathSpec::Memoryless { chi0 };
        Ok(())
    })
}

/// Reduced density matrix at time `t` from the initial coherent amplitude
/// `γ`. A negative `n_cut` picks the cutoff from the tail rule.
///
/// # Safety
/// `spec` must be a live handle; `out` a valid `QbRho*` slot.
#[no_mangle]
pub unsafe extern "C" fn qb_rho_compute(
    spec: *const QbSpec,
    gamma_re: f64,
    gamma_im: f64,
    t: f64,
    n_cut: i64,
    out: *mut *mut QbRho,
) -> QbStatus {
    guard(|| {
        let s = spec_ref(spec)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let opts = if n_cut < 0 { RhoOptions::default() } else { RhoOptions::fixed(n_cut as usize) };
        let spec = lib(validate_spec(&s.spec))?;
        let rho = lib(rho_matrix(&spec, Complex64::new(gamma_re, gamma_im), t, &opts))?;
        *out = Box::into_raw(Box::new(QbRho { rho }));
        Ok(())
    })
}

/// Matrix dimension (`n_cut + 1`); 0 for a null handle.
///
/// # Safety
/// `rho` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qb_rho_dim(rho: *const QbRho) -> usize {
    rho.as_ref().map_or(0, |r| r.rho.dim())
}

/// `1 - Tr ρ` of the truncated matrix; NaN for a null handle.
///
/// # Safety
/// `rho` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qb_rho_trace_deficit(rho: *const QbRho) -> f64 {
    rho.as_ref().map_or(f64::NAN, |r| r.rho.trace_deficit)
}

/// Element `ρ_nm`.
///
/// # Safety
/// `rho` must be a live handle; `re`, `im` valid `double*`.
#[no_mangle]
pub unsafe extern "C" fn qb_rho_get(rho: *const QbRho, n: usize, m: usize, re: *mut f64, im: *mut f64) -> QbStatus {
    guard(|| {
        let r = rho.as_ref().ok_or_else(|| null("rho"))?;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        let dim = r.rho.dim();
        if n >= dim || m >= dim {
            set_error(format!("index ({n}, {m}) outside a {dim}x{dim} matrix"));
            return Err(QbStatus::OutOfRange);
        }
        let z = r.rho.get(n, m);
        *re = z.re;
        *im = z.im;
        Ok(())
    })
}

/// Writes the matrix row-major as interleaved `re, im` pairs; `len` counts
/// doubles and must be at least `2·dim²`.
///
/// # Safety
/// `rho` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qb_rho_copy(rho: *const QbRho, buf: *mut f64, len: usize) -> QbStatus {
    guard(|| {
        let r = rho.as_ref().ok_or_else(|| null("rho"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let dim = r.rho.dim();
        if len < 2 * dim * dim {
            set_error(format!("buffer holds {len} doubles, need {}", 2 * dim * dim));
            return Err(QbStatus::BufferTooSmall);
        }
        let out = std::slice::from_raw_parts_mut(buf, 2 * dim * dim);
        for n in 0..dim {
            for m in 0..dim {
                let z = r.rho.get(n, m);
                out[2 * (n * dim + m)] = z.re;
                out[2 * (n * dim + m) + 1] = z.im;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `rho` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn qb_rho_free(rho: *mut QbRho) {
    if !rho.is_null() {
        drop(Box::from_raw(rho));
    }
}

/// Excitation probabilities `P_0 … P_{n_max}` at time `t`, written to `out`
/// (`n_max + 1` doubles). Uses the displaced-thermal closed form when the
/// two-photon coupling vanishes and the density-matrix diagonal otherwise.
///
/// # Safety
/// `spec` must be a live handle; `out` must point to `n_max + 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn qb_pn(
    spec: *const QbSpec,
    gamma_re: f64,
    gamma_im: f64,
    t: f64,
    n_max: usize,
    out: *mut f64,
) -> QbStatus {
    guard(|| {
        let s = spec_ref(spec)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = lib(validate_spec(&s.spec))?;
        let gamma = Complex64::new(gamma_re, gamma_im);
        let ps: Vec<f64> = if spec.phi.im == 0.0 {
            let grid: Vec<f64> = if t == 0.0 { vec![0.0] } else { vec![0.0, t] };
            let cs = lib(propagate(&spec, &grid))?;
            let i = grid.len() - 1;
            pn_laguerre_all(big_z(&cs, i, gamma), eta(&cs, i, spec.beta), n_max).iter().map(|r| r.p).collect()
        } else {
            lib(rho_matrix(&spec, gamma, t, &RhoOptions::fixed(n_max)))?.diagonal()
        };
        std::slice::from_raw_parts_mut(out, n_max + 1).copy_from_slice(&ps);
        Ok(())
    })
}

/// Library version, static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
