//! C ABI over `vdc-core`.
//!
//! Simulations are opaque handles created from a TOML configuration and
//! released with [`vdc_simulation_free`]. Every fallible call returns a
//! [`VdcStatus`]; the message of the most recent failure on the calling
//! thread is available through [`vdc_last_error`]. Matrices cross the
//! boundary as 36 doubles in column-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vdc_core::allocator::derive_gains;
use vdc_core::sim::{ExperimentConfig, Simulation};
use vdc_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VdcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    Diverged = 4,
    NumericalError = 5,
    IoError = 6,
    BufferTooSmall = 7,
    Finished = 8,
    Panic = 9,
}

/// Opaque simulation handle.
pub struct VdcSimulation {
    inner: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> VdcStatus {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => VdcStatus::ConfigError,
        Error::Diverged { .. } => VdcStatus::Diverged,
        Error::Io(_) => VdcStatus::IoError,
        _ => VdcStatus::NumericalError,
    }
}

fn fail(e: Error) -> VdcStatus {
    let status = status_of(&e);
    set_error(e.to_string());
    status
}

/// Runs `f`, turning a panic into [`VdcStatus::Panic`].
fn guarded(f: impl FnOnce() -> VdcStatus) -> VdcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            VdcStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, VdcStatus> {
    if s.is_null() {
        set_error("null string argument");
        return Err(VdcStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        VdcStatus::InvalidUtf8
    })
}

unsafe fn sim_ref<'a>(sim: *const VdcSimulation) -> Result<&'a VdcSimulation, VdcStatus> {
    sim.as_ref().ok_or_else(|| {
        set_error("null simulation handle");
        VdcStatus::NullPointer
    })
}

unsafe fn sim_mut<'a>(sim: *mut VdcSimulation) -> Result<&'a mut VdcSimulation, VdcStatus> {
    sim.as_mut().ok_or_else(|| {
        set_error("null simulation handle");
        VdcStatus::NullPointer
    })
}

/// Copies `text` plus a terminating NUL into `buf`. `needed` receives the
/// full size including the NUL, so callers can size a second attempt.
unsafe fn copy_out(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> VdcStatus {
    let size = text.len() + 1;
    if !needed.is_null() {
        *needed = size;
    }
    if buf.is_null() || len < size {
        set_error(format!("buffer of {len} bytes is too small, {size} needed"));
        return VdcStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
    *buf.add(text.len()) = 0;
    VdcStatus::Ok
}

fn create(cfg: Result<ExperimentConfig, Error>, out: *mut *mut VdcSimulation) -> VdcStatus {
    if out.is_null() {
        set_error("null output pointer");
        return VdcStatus::NullPointer;
    }
    match cfg.and_then(Simulation::new) {
        Ok(inner) => {
            let handle = Box::new(VdcSimulation { inner });
            unsafe { *out = Box::into_raw(handle) };
            VdcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Builds a simulation from configuration text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_from_toml(toml: *const c_char, out: *mut *mut VdcSimulation) -> VdcStatus {
    guarded(|| match read_str(toml) {
        Ok(text) => create(ExperimentConfig::from_toml_str(text), out),
        Err(s) => s,
    })
}

/// Builds a simulation from a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_from_path(path: *const c_char, out: *mut *mut VdcSimulation) -> VdcStatus {
    guarded(|| match read_str(path) {
        Ok(p) => create(ExperimentConfig::from_path(Path::new(p)), out),
        Err(s) => s,
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from one of the constructors and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_free(sim: *mut VdcSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances one control period. Returns `Finished` once the configured
/// duration has elapsed.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_step(sim: *mut VdcSimulation) -> VdcStatus {
    guarded(|| {
        let s = match sim_mut(sim) {
            Ok(s) => s,
            Err(e) => return e,
        };
        if s.inner.is_finished() && s.inner.step_index() >= s.inner.total_steps() {
            return VdcStatus::Finished;
        }
        match s.inner.step() {
            Ok(()) => VdcStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Runs the remaining steps.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_run(sim: *mut VdcSimulation) -> VdcStatus {
    guarded(|| match sim_mut(sim) {
        Ok(s) => match s.inner.run() {
            Ok(()) => VdcStatus::Ok,
            Err(e) => fail(e),
        },
        Err(e) => e,
    })
}

/// Current simulation time in seconds.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_time(sim: *const VdcSimulation, out: *mut f64) -> VdcStatus {
    guarded(|| match (sim_ref(sim), out.is_null()) {
        (Ok(s), false) => {
            *out = s.inner.time();
            VdcStatus::Ok
        }
        (Err(e), _) => e,
        (_, true) => VdcStatus::NullPointer,
    })
}

/// Writes 1 to `out` when no further steps will run, else 0.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_is_finished(sim: *const VdcSimulation, out: *mut i32) -> VdcStatus {
    guarded(|| match (sim_ref(sim), out.is_null()) {
        (Ok(s), false) => {
            *out = i32::from(s.inner.is_finished());
            VdcStatus::Ok
        }
        (Err(e), _) => e,
        (_, true) => VdcStatus::NullPointer,
    })
}

/// Sliding-surface vector of the last step (zeros before the first step).
///
/// # Safety
/// `sim` must be a live handle and `out` must hold 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_upsilon(sim: *const VdcSimulation, out: *mut f64) -> VdcStatus {
    guarded(|| match (sim_ref(sim), out.is_null()) {
        (Ok(s), false) => {
            let u = s.inner.last_upsilon().unwrap_or_default();
            ptr::copy_nonoverlapping(u.as_ptr(), out, 6);
            VdcStatus::Ok
        }
        (Err(e), _) => e,
        (_, true) => VdcStatus::NullPointer,
    })
}

/// Length of each plant state vector: joint count for a chain, 6 for the
/// ideal Cartesian plant.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_state_len(sim: *const VdcSimulation, out: *mut usize) -> VdcStatus {
    guarded(|| match (sim_ref(sim), out.is_null()) {
        (Ok(s), false) => {
            *out = s.inner.plant_state().0.len();
            VdcStatus::Ok
        }
        (Err(e), _) => e,
        (_, true) => VdcStatus::NullPointer,
    })
}

/// Copies positions and velocities of the plant into two arrays of `len`
/// doubles each.
///
/// # Safety
/// `sim` must be a live handle; `pos` and `vel` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_state(
    sim: *const VdcSimulation,
    pos: *mut f64,
    vel: *mut f64,
    len: usize,
) -> VdcStatus {
    guarded(|| {
        let s = match sim_ref(sim) {
            Ok(s) => s,
            Err(e) => return e,
        };
        if pos.is_null() || vel.is_null() {
            set_error("null output array");
            return VdcStatus::NullPointer;
        }
        let (p, v) = s.inner.plant_state();
        if len < p.len() {
            set_error(format!("state arrays need {} entries", p.len()));
            return VdcStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(p.as_ptr(), pos, p.len());
        ptr::copy_nonoverlapping(v.as_ptr(), vel, v.len());
        VdcStatus::Ok
    })
}

/// Run summary as JSON. `needed` receives the size including the NUL; pass
/// a null buffer to query it.
///
/// # Safety
/// `sim` must be a live handle; `buf` must hold `len` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn vdc_simulation_summary_json(
    sim: *const VdcSimulation,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> VdcStatus {
    guarded(|| {
        let s = match sim_ref(sim) {
            Ok(s) => s,
            Err(e) => return e,
        };
        match s.inner.summary() {
            Ok(summary) => {
                let text = serde_json::to_string(&summary).expect("summary serializes");
                copy_out(&text, buf, len, needed)
            }
            Err(e) => fail(e),
        }
    })
}

/// Allocator gains of the configuration's impedance section, each as 36
/// column-major doubles.
///
/// # Safety
/// `toml` must be NUL-terminated; each output must hold 36 doubles.
#[no_mangle]
pub unsafe extern "C" fn vdc_gains_from_toml(
    toml: *const c_char,
    gamma_p: *mut f64,
    gamma_v: *mut f64,
    gamma_f: *mut f64,
) -> VdcStatus {
    guarded(|| {
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        if gamma_p.is_null() || gamma_v.is_null() || gamma_f.is_null() {
            set_error("null output array");
            return VdcStatus::NullPointer;
        }
        let gains = ExperimentConfig::from_toml_str(text)
            .and_then(|c| c.impedance.spec())
            .and_then(|spec| derive_gains(&spec));
        match gains {
            Ok(g) => {
                ptr::copy_nonoverlapping(g.gamma_p.as_ptr(), gamma_p, 36);
                ptr::copy_nonoverlapping(g.gamma_v.as_ptr(), gamma_v, 36);
                ptr::copy_nonoverlapping(g.gamma_f.as_ptr(), gamma_f, 36);
                VdcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Message of the last failure on this thread, with the same buffer
/// protocol as [`vdc_simulation_summary_json`].
///
/// # Safety
/// `buf` must hold `len` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn vdc_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> VdcStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    copy_out(&msg, buf, len, needed)
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn vdc_status_name(status: VdcStatus) -> *const c_char {
    let s: &'static CStr = match status {
        VdcStatus::Ok => c"ok",
        VdcStatus::NullPointer => c"null pointer",
        VdcStatus::InvalidUtf8 => c"invalid UTF-8",
        VdcStatus::ConfigError => c"configuration error",
        VdcStatus::Diverged => c"simulation diverged",
        VdcStatus::NumericalError => c"numerical error",
        VdcStatus::IoError => c"I/O error",
        VdcStatus::BufferTooSmall => c"buffer too small",
        VdcStatus::Finished => c"simulation finished",
        VdcStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}
