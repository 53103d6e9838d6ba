//! C ABI for qrouter.
//!
//! Parameter sets and simulation results are opaque handles created and
//! released by the library. Every fallible call returns a [`QrStatus`];
//! on failure [`qr_last_error`] describes the problem for the calling thread.
//! Array outputs are written to caller-provided buffers whose capacity is
//! passed alongside; the required length is reported through `out_len`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qrouter::analytic::AnalyticEngine;
use qrouter::keyrate::{key_rate_curve, QberMode};
use qrouter::matching::Matcher;
use qrouter::noise::{ghz_diag_lambdas, qbers_3, secret_fraction, Fidelities, QberSet};
use qrouter::sim::{run_ensemble, EnsembleStats};
use qrouter::{BitConfiguration, Error, Params};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    TooLarge = 4,
    BufferTooSmall = 5,
    Internal = 6,
}

/// `QrQberMode` selects how storage ages enter the total QBER.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrQberMode {
    Joint = 0,
    Marginal = 1,
}

/// Opaque parameter set.
pub struct QrParams(Params);

/// Opaque Monte Carlo result.
pub struct QrEnsemble {
    stats: EnsembleStats,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> QrStatus {
    match err {
        Error::InstanceTooLarge { .. } | Error::DimensionTooLarge { .. } => QrStatus::TooLarge,
        Error::Validation(_)
        | Error::Config { .. }
        | Error::ConfigLength { .. }
        | Error::FidelityOutOfRange(_)
        | Error::UnsupportedPartyCount(_)
        | Error::FlowNeedsThreeParties(_) => QrStatus::Validation,
        Error::InvalidArgument(_) => QrStatus::InvalidArgument,
        _ => QrStatus::Internal,
    }
}

fn fail(status: QrStatus, message: impl Into<String>) -> QrStatus {
    set_error(message);
    status
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), QrStatus>) -> QrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QrStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(QrStatus::Internal, "internal panic"),
    }
}

fn lift<T>(r: qrouter::Result<T>) -> Result<T, QrStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, QrStatus> {
    p.as_ref()
        .ok_or_else(|| fail(QrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, QrStatus> {
    if p.is_null() {
        return Err(fail(QrStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(QrStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copy `values` into `out[..cap]`, always reporting the full length.
unsafe fn write_slice(values: &[f64], out: *mut f64, cap: usize, out_len: *mut usize) -> Result<(), QrStatus> {
    if !out_len.is_null() {
        *out_len = values.len();
    }
    if cap < values.len() {
        return Err(fail(
            QrStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", values.len()),
        ));
    }
    if values.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(fail(QrStatus::NullPointer, "output buffer is null"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn qr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New parameter set holding the defaults; release with `qr_params_free`.
#[no_mangle]
pub extern "C" fn qr_params_new() -> *mut QrParams {
    Box::into_raw(Box::new(QrParams(Params::default())))
}

/// # Safety
/// `params` must come from `qr_params_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qr_params_free(params: *mut QrParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Assign one parameter from its textual form, e.g. `("cutoff", "10")`.
///
/// # Safety
/// `params` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn qr_params_set(params: *mut QrParams, key: *const c_char, value: *const c_char) -> QrStatus {
    guard(|| {
        let p = params
            .as_mut()
            .ok_or_else(|| fail(QrStatus::NullPointer, "params is null"))?;
        let (key, value) = (c_str(key, "key")?, c_str(value, "value")?);
        p.0.set(key, value)
            .map_err(|m| fail(QrStatus::InvalidArgument, m))
    })
}

/// # Safety
/// `params` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qr_params_validate(params: *const QrParams) -> QrStatus {
    guard(|| lift(deref(params, "params")?.0.validate()))
}

/// Run the Monte Carlo ensemble; release the result with `qr_ensemble_free`.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qr_simulate(params: *const QrParams, out: *mut *mut QrEnsemble) -> QrStatus {
    guard(|| {
        let p = deref(params, "params")?;
        if out.is_null() {
            return Err(fail(QrStatus::NullPointer, "out is null"));
        }
        let stats = lift(run_ensemble(&p.0))?;
        *out = Box::into_raw(Box::new(QrEnsemble { stats }));
        Ok(())
    })
}

/// # Safety
/// `ensemble` must come from `qr_simulate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qr_ensemble_free(ensemble: *mut QrEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Number of simulated rounds, or 0 for a null handle.
///
/// # Safety
/// `ensemble` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qr_ensemble_rounds(ensemble: *const QrEnsemble) -> usize {
    ensemble.as_ref().map_or(0, |e| e.stats.rounds)
}

/// `⟨l⟩(s)` for every round.
///
/// # Safety
/// `ensemble` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn qr_ensemble_mean_l(
    ensemble: *const QrEnsemble,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> QrStatus {
    guard(|| write_slice(&deref(ensemble, "ensemble")?.stats.mean_l(), out, cap, out_len))
}

/// Router rate `R(s)` for every round.
///
/// # Safety
/// As for `qr_ensemble_mean_l`.
#[no_mangle]
pub unsafe extern "C" fn qr_ensemble_router_rate(
    ensemble: *const QrEnsemble,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> QrStatus {
    guard(|| write_slice(&deref(ensemble, "ensemble")?.stats.router_rate(), out, cap, out_len))
}

/// Secret key rate `K(s)` for every round with decoherence time `tau`;
/// `mode` is a `QrQberMode` value.
///
/// # Safety
/// As for `qr_ensemble_mean_l`.
#[no_mangle]
pub unsafe extern "C" fn qr_ensemble_key_rate(
    ensemble: *const QrEnsemble,
    tau: u32,
    mode: i32,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> QrStatus {
    guard(|| {
        let e = deref(ensemble, "ensemble")?;
        if tau == 0 {
            return Err(fail(QrStatus::InvalidArgument, "tau must be positive"));
        }
        let mode = match mode {
            m if m == QrQberMode::Joint as i32 => QberMode::Joint,
            m if m == QrQberMode::Marginal as i32 => QberMode::Marginal,
            m => return Err(fail(QrStatus::InvalidArgument, format!("unknown QBER mode {m}"))),
        };
        let k: Vec<f64> = lift(key_rate_curve(&e.stats, tau, mode))?
            .iter()
            .map(|p| p.key_rate)
            .collect();
        write_slice(&k, out, cap, out_len)
    })
}

/// Exact router rate `R(s)` for `s = 1..=total_rounds`.
///
/// # Safety
/// `params` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn qr_analytic_router_rate(
    params: *const QrParams,
    force: bool,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> QrStatus {
    guard(|| {
        let p = &deref(params, "params")?.0;
        let engine = lift(AnalyticEngine::new(p, force))?;
        let rates: Vec<f64> = engine.run(p.total_rounds).iter().map(|r| r.router_rate).collect();
        write_slice(&rates, out, cap, out_len)
    })
}

/// Size of a maximum matching. `mask` bit `party·m + slot` marks a filled memory.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qr_matching_cardinality(
    n_parties: usize,
    mem_per_party: usize,
    w: usize,
    mask: u64,
    out: *mut usize,
) -> QrStatus {
    guard(|| {
        let probe = Params {
            n_parties,
            mem_per_party,
            max_conn_len: w,
            ..Params::default()
        };
        lift(probe.validate())?;
        if out.is_null() {
            return Err(fail(QrStatus::NullPointer, "out is null"));
        }
        let c = BitConfiguration::from_mask(n_parties, mem_per_party, mask);
        *out = lift(Matcher::new(n_parties, mem_per_party, w).cardinality(&c))?;
        Ok(())
    })
}

/// GHZ-diagonal weights `(λ₀⁺, λ₀⁻, λ₁, λ₂, λ₃)` for three fidelities.
///
/// # Safety
/// `out` must hold 5 doubles.
#[no_mangle]
pub unsafe extern "C" fn qr_ghz_lambdas(f_a: f64, f_b1: f64, f_b2: f64, out: *mut f64) -> QrStatus {
    guard(|| {
        let l = lift(ghz_diag_lambdas(&lift(Fidelities::new(vec![f_a, f_b1, f_b2]))?))?;
        write_slice(&l.to_array(), out, 5, ptr::null_mut())
    })
}

/// `(Q_X, Q_AB₁, Q_AB₂)` for three fidelities.
///
/// # Safety
/// `out` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn qr_qbers3(f_a: f64, f_b1: f64, f_b2: f64, out: *mut f64) -> QrStatus {
    guard(|| {
        let l = lift(ghz_diag_lambdas(&lift(Fidelities::new(vec![f_a, f_b1, f_b2]))?))?;
        let q = qbers_3(&l);
        write_slice(&[q.q_x, q.q_ab[0], q.q_ab[1]], out, 3, ptr::null_mut())
    })
}

/// Asymptotic secret fraction for `Q_X` and `n_ab` pairwise QBERs.
///
/// # Safety
/// `q_ab` must hold `n_ab` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn qr_secret_fraction(q_x: f64, q_ab: *const f64, n_ab: usize, out: *mut f64) -> QrStatus {
    guard(|| {
        if out.is_null() || (q_ab.is_null() && n_ab > 0) {
            return Err(fail(QrStatus::NullPointer, "null buffer"));
        }
        let q_ab = if n_ab == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(q_ab, n_ab).to_vec()
        };
        if !std::iter::once(q_x).chain(q_ab.iter().copied()).all(|q| (0.0..=1.0).contains(&q)) {
            return Err(fail(QrStatus::InvalidArgument, "QBERs must lie in [0, 1]"));
        }
        *out = secret_fraction(&QberSet { q_x, q_ab });
        Ok(())
    })
}
