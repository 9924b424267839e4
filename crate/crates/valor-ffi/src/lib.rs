//! C ABI for the valor benchmark library.
//!
//! Conventions:
//! - Environments are opaque handles created and destroyed here.
//! - All strings are NUL-terminated UTF-8; strings returned to the caller
//!   are owned by the caller and must be released with
//!   [`valor_string_free`].
//! - Every fallible call returns a [`ValorStatus`]; on failure a
//!   thread-local message is available through [`valor_last_error`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;

use valor::bench::{run_experiment, env_by_name, report_json, ExperimentConfig};
use valor::cdp::CdpSpec;
use valor::error::Error;
use valor::hardness::barriers::build_rare_reward_env;
use valor::hardness::sat::{parse_dimacs, sat_decision_via_olive};

/// ABI version; bump on any breaking change to this surface.
pub const VALOR_ABI_VERSION: u32 = 1;

/// Outcome of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValorStatus {
    Ok = 0,
    /// Bad pointer, encoding, JSON schema, or unknown name.
    InvalidArgument = 1,
    /// The underlying computation failed.
    RuntimeError = 2,
    /// An explicit enumeration or sampling budget would be exceeded.
    BudgetExceeded = 3,
}

/// Opaque environment handle wrapping a validated process specification.
pub struct ValorEnv {
    spec: CdpSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").expect("empty"));
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(e: &Error) -> ValorStatus {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Dimacs(_) | Error::InvalidSpec(_) => {
            ValorStatus::InvalidArgument
        }
        Error::BudgetExceeded(_) | Error::ParamsOverflow(_) => ValorStatus::BudgetExceeded,
        _ => ValorStatus::RuntimeError,
    }
}

fn fail(e: Error) -> ValorStatus {
    let status = status_of(&e);
    set_error(&e.to_string());
    status
}

/// # Safety
/// `ptr` must be NULL or a valid NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, ValorStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} is null"));
        return Err(ValorStatus::InvalidArgument);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(s),
        Err(_) => {
            set_error(&format!("{what} is not valid UTF-8"));
            Err(ValorStatus::InvalidArgument)
        }
    }
}

fn give_string(text: String, out: *mut *mut c_char) -> ValorStatus {
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            ValorStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL byte");
            ValorStatus::RuntimeError
        }
    }
}

/// ABI version of this library.
#[no_mangle]
pub extern "C" fn valor_abi_version() -> u32 {
    VALOR_ABI_VERSION
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn valor_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer previously returned by a `valor_*` call
/// and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn valor_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Build a named environment (`gridworld`, `random`, `backup-chain`,
/// `needle`, `rare-reward`, `sat-mdp`) with builder parameters as JSON
/// (NULL for defaults).
///
/// # Safety
/// `name` and `params_json` must be NULL or valid NUL-terminated strings;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn valor_env_build(
    name: *const c_char,
    params_json: *const c_char,
    seed: u64,
    out: *mut *mut ValorEnv,
) -> ValorStatus {
    if out.is_null() {
        set_error("out is null");
        return ValorStatus::InvalidArgument;
    }
    let name = match unsafe { read_str(name, "name") } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let params = if params_json.is_null() {
        serde_json::Value::Null
    } else {
        let text = match unsafe { read_str(params_json, "params_json") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => return fail(Error::Json(e)),
        }
    };
    match env_by_name(name, &params, seed) {
        Ok(spec) => {
            unsafe { *out = Box::into_raw(Box::new(ValorEnv { spec })) };
            ValorStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Load an environment from a spec document.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn valor_env_from_json(
    json: *const c_char,
    out: *mut *mut ValorEnv,
) -> ValorStatus {
    if out.is_null() {
        set_error("out is null");
        return ValorStatus::InvalidArgument;
    }
    let text = match unsafe { read_str(json, "json") } {
        Ok(s) => s,
        Err(status) => return status,
    };
    match CdpSpec::from_json(text) {
        Ok(spec) => {
            unsafe { *out = Box::into_raw(Box::new(ValorEnv { spec })) };
            ValorStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Serialize an environment to its JSON document.
///
/// # Safety
/// `env` must be a live handle from this library; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn valor_env_to_json(
    env: *const ValorEnv,
    out: *mut *mut c_char,
) -> ValorStatus {
    if env.is_null() || out.is_null() {
        set_error("env or out is null");
        return ValorStatus::InvalidArgument;
    }
    match unsafe { &(*env).spec }.to_json() {
        Ok(text) => give_string(text, out),
        Err(e) => fail(e),
    }
}

/// Exact optimal expected return of the environment.
///
/// # Safety
/// `env` must be a live handle from this library; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn valor_env_optimal_value(
    env: *const ValorEnv,
    out: *mut f64,
) -> ValorStatus {
    if env.is_null() || out.is_null() {
        set_error("env or out is null");
        return ValorStatus::InvalidArgument;
    }
    unsafe { *out = (*env).spec.exact_values().v_star };
    ValorStatus::Ok
}

/// Destroy an environment handle.
///
/// # Safety
/// `env` must be NULL or a live handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn valor_env_free(env: *mut ValorEnv) {
    if !env.is_null() {
        drop(unsafe { Box::from_raw(env) });
    }
}

/// Run a full experiment from a configuration document and return the
/// aggregate report as JSON.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string; `report_out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn valor_run_experiment(
    config_json: *const c_char,
    report_out: *mut *mut c_char,
) -> ValorStatus {
    if report_out.is_null() {
        set_error("report_out is null");
        return ValorStatus::InvalidArgument;
    }
    let text = match unsafe { read_str(config_json, "config_json") } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let config: ExperimentConfig = match serde_json::from_str(text) {
        Ok(c) => c,
        Err(e) => return fail(Error::Config(format!("config schema: {e}"))),
    };
    match run_experiment(&config).and_then(|r| report_json(&r)) {
        Ok(json) => give_string(json, report_out),
        Err(e) => fail(e),
    }
}

/// Decide a DIMACS 3-SAT instance through the optimistic constraint
/// program; writes 1 for satisfiable, 0 otherwise.
///
/// # Safety
/// `dimacs` must be a valid NUL-terminated string; `is_sat_out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn valor_sat_decide(
    dimacs: *const c_char,
    budget: u64,
    is_sat_out: *mut i32,
) -> ValorStatus {
    if is_sat_out.is_null() {
        set_error("is_sat_out is null");
        return ValorStatus::InvalidArgument;
    }
    let text = match unsafe { read_str(dimacs, "dimacs") } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let formula = match parse_dimacs(text) {
        Ok(f) => f,
        Err(e) => return fail(e),
    };
    match sat_decision_via_olive(&formula, budget) {
        Ok(sat) => {
            unsafe { *is_sat_out = i32::from(sat) };
            ValorStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Exact square losses of the rare-observation construction: the all-zero
/// function, the optimal one, and the flat `sqrt(eps)` one, plus the
/// expected gap between the last two.
///
/// # Safety
/// `losses_out` must point to at least three doubles; `gap_out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn valor_rare_reward_losses(
    eps: f64,
    losses_out: *mut f64,
    gap_out: *mut f64,
) -> ValorStatus {
    if losses_out.is_null() || gap_out.is_null() {
        set_error("losses_out or gap_out is null");
        return ValorStatus::InvalidArgument;
    }
    let env = match build_rare_reward_env(eps) {
        Ok(env) => env,
        Err(e) => return fail(e),
    };
    for i in 0..3 {
        match env.sqloss(i) {
            Ok(v) => unsafe { *losses_out.add(i) = v },
            Err(e) => return fail(e),
        }
    }
    match env.expected_gap() {
        Ok(v) => {
            unsafe { *gap_out = v };
            ValorStatus::Ok
        }
        Err(e) => fail(e),
    }
}
