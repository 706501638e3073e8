//! C ABI for the otafl simulator.
//!
//! Configurations and finished runs are opaque heap handles released with
//! their `_free` function. Every fallible call returns an [`OtaflStatus`];
//! on failure a message is available from [`otafl_last_error_message`] on
//! the same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use otafl::config::{dbm_to_watts, parse_value};
use otafl::diagnostics::convergence_bound;
use otafl::energy::{computation_energy, path_gain};
use otafl::output::write_run;
use otafl::{Error, RunOutput, SimConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtaflStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Contract = 5,
    Numerical = 6,
    Io = 7,
    Ingestion = 8,
    OutOfRange = 9,
    BufferTooSmall = 10,
    Panic = 11,
    Other = 12,
}

/// Opaque simulation configuration.
pub struct OtaflConfig {
    inner: SimConfig,
}

/// Opaque finished run.
pub struct OtaflRun {
    inner: RunOutput,
}

/// Scalar metrics of one round. Absent values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtaflRoundSummary {
    pub t: usize,
    pub n_active: usize,
    pub alpha: f64,
    pub error_sq: f64,
    pub phi: f64,
    pub global_loss: f64,
    pub test_accuracy: f64,
    pub cumulative_energy: f64,
    pub cumulative_consumed: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> OtaflStatus {
    match err {
        Error::Config { .. } => OtaflStatus::Config,
        Error::Domain(_) => OtaflStatus::Domain,
        Error::Contract(_) => OtaflStatus::Contract,
        Error::Numerical { .. } => OtaflStatus::Numerical,
        Error::Io { .. } => OtaflStatus::Io,
        Error::Ingestion { .. } => OtaflStatus::Ingestion,
        _ => OtaflStatus::Other,
    }
}

struct Failure(OtaflStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OtaflStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            OtaflStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            OtaflStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(OtaflStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(OtaflStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn otafl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default configuration. Never null.
#[no_mangle]
pub extern "C" fn otafl_config_default() -> *mut OtaflConfig {
    Box::into_raw(Box::new(OtaflConfig {
        inner: SimConfig::default(),
    }))
}

/// Parses a TOML document.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otafl_config_from_str(
    toml: *const c_char,
    out: *mut *mut OtaflConfig,
) -> OtaflStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = SimConfig::from_toml_str(str_arg(toml, "toml")?)?;
        *out = Box::into_raw(Box::new(OtaflConfig { inner: cfg }));
        Ok(())
    })
}

/// Reads a TOML config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otafl_config_from_file(
    path: *const c_char,
    out: *mut *mut OtaflConfig,
) -> OtaflStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = SimConfig::load(Some(Path::new(str_arg(path, "path")?)), &[])?;
        *out = Box::into_raw(Box::new(OtaflConfig { inner: cfg }));
        Ok(())
    })
}

/// Sets one key using the same syntax as a `--set key=value` override.
/// The configuration is left unchanged if the result fails validation.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn otafl_config_set(
    cfg: *mut OtaflConfig,
    key: *const c_char,
    value: *const c_char,
) -> OtaflStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        let mut next = cfg.inner.clone();
        next.set(str_arg(key, "key")?, &parse_value(str_arg(value, "value")?))?;
        next.validate()?;
        cfg.inner = next;
        Ok(())
    })
}

/// Serializes the configuration as TOML. Free with [`otafl_string_free`].
///
/// # Safety
/// `cfg` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn otafl_config_to_string(cfg: *const OtaflConfig) -> *mut c_char {
    match cfg.as_ref() {
        Some(c) => CString::new(c.inner.emit()).map_or(ptr::null_mut(), CString::into_raw),
        None => {
            set_error("`cfg` is null");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `cfg` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn otafl_config_free(cfg: *mut OtaflConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `s` must come from this library (or be null).
#[no_mangle]
pub unsafe extern "C" fn otafl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs the simulation to completion.
///
/// # Safety
/// `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otafl_run(
    cfg: *const OtaflConfig,
    out: *mut *mut OtaflRun,
) -> OtaflStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let out = out_arg(out, "out")?;
        let result = otafl::run(&cfg.inner)?;
        *out = Box::into_raw(Box::new(OtaflRun { inner: result }));
        Ok(())
    })
}

/// # Safety
/// `run` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn otafl_run_free(run: *mut OtaflRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of recorded rounds; 0 for a null handle.
///
/// # Safety
/// `run` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn otafl_run_num_rounds(run: *const OtaflRun) -> usize {
    run.as_ref().map_or(0, |r| r.inner.records.len())
}

/// Scalar metrics of round `index` (0-based).
///
/// # Safety
/// `run` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otafl_run_round(
    run: *const OtaflRun,
    index: usize,
    out: *mut OtaflRoundSummary,
) -> OtaflStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        let out = out_arg(out, "out")?;
        let r = run.inner.records.get(index).ok_or_else(|| {
            Failure(
                OtaflStatus::OutOfRange,
                format!(
                    "round index {index} out of range ({} rounds)",
                    run.inner.records.len()
                ),
            )
        })?;
        *out = OtaflRoundSummary {
            t: r.t,
            n_active: r.n_active,
            alpha: r.alpha.unwrap_or(f64::NAN),
            error_sq: r.error_sq.unwrap_or(f64::NAN),
            phi: r.phi,
            global_loss: r.global_loss.unwrap_or(f64::NAN),
            test_accuracy: r.test_accuracy.unwrap_or(f64::NAN),
            cumulative_energy: r.cumulative_energy,
            cumulative_consumed: r.cumulative_consumed,
        };
        Ok(())
    })
}

/// Test accuracy at the last evaluated round.
///
/// # Safety
/// `run` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otafl_run_final_accuracy(
    run: *const OtaflRun,
    out: *mut f64,
) -> OtaflStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(run, "run")?.inner.final_accuracy();
        Ok(())
    })
}

/// Copies the final model into `buf`. `*len_out` always receives the model
/// length; pass a null `buf` to query it.
///
/// # Safety
/// `buf` must hold `capacity` doubles (or be null); `len_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otafl_run_final_model(
    run: *const OtaflRun,
    buf: *mut f64,
    capacity: usize,
    len_out: *mut usize,
) -> OtaflStatus {
    guard(|| {
        let w = &ref_arg(run, "run")?.inner.final_model.w;
        *out_arg(len_out, "len_out")? = w.len();
        if buf.is_null() {
            return Ok(());
        }
        if capacity < w.len() {
            return Err(Failure(
                OtaflStatus::BufferTooSmall,
                format!("model has {} parameters, buffer holds {capacity}", w.len()),
            ));
        }
        ptr::copy_nonoverlapping(w.as_ptr(), buf, w.len());
        Ok(())
    })
}

/// Writes records, summary, diagnostics, config and geometry into `dir`.
///
/// # Safety
/// `run` must come from this library; `dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn otafl_run_write_outputs(
    run: *const OtaflRun,
    dir: *const c_char,
) -> OtaflStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        write_run(&run.inner, Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// `P · d^(−ξ)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otafl_path_gain(
    power: f64,
    distance: f64,
    xi: f64,
    out: *mut f64,
) -> OtaflStatus {
    guard(|| {
        *out_arg(out, "out")? = path_gain(power, distance, xi)?;
        Ok(())
    })
}

/// `κ · C · |D| · f²`, joules per epoch.
#[no_mangle]
pub extern "C" fn otafl_computation_energy(
    kappa: f64,
    cycles_per_sample: f64,
    dataset_size: usize,
    freq_hz: f64,
) -> f64 {
    computation_energy(kappa, cycles_per_sample, dataset_size, freq_hz)
}

#[no_mangle]
pub extern "C" fn otafl_dbm_to_watts(dbm: f64) -> f64 {
    dbm_to_watts(dbm)
}

/// Three-term convergence bound.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn otafl_convergence_bound(
    delta0: f64,
    eta: f64,
    rounds: usize,
    tau_min: f64,
    tau_max: f64,
    smoothness: f64,
    g_sq: f64,
    zeta_sq: f64,
    out: *mut f64,
) -> OtaflStatus {
    guard(|| {
        *out_arg(out, "out")? = convergence_bound(
            delta0, eta, rounds, tau_min, tau_max, smoothness, g_sq, zeta_sq,
        )?;
        Ok(())
    })
}
