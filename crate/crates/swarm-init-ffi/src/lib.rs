//! C ABI for the sequential-release design library.
//!
//! Configurations are parsed from JSON into opaque handles; analysis
//! entry points return status codes and hand results back as C strings or
//! plain structs. Strings returned by this library must be released with
//! [`swarm_string_free`]; handles with [`swarm_config_free`].

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use swarm_init::config::ExperimentConfig;
use swarm_init::numerics::chi2_quantile;
use swarm_init::report;
use swarm_init::safety::release_policy_nominal;

/// Status codes returned by every fallible entry point.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwarmStatus {
    /// Success.
    Ok = 0,
    /// The analysis ran but its acceptance gate failed.
    GateFailed = 1,
    /// Malformed input: bad JSON, bad parameter, or a null pointer.
    InvalidInput = 2,
    /// Internal failure.
    Internal = 3,
}

/// Opaque configuration handle.
pub struct SwarmConfig {
    inner: ExperimentConfig,
}

/// Derived model constants for one configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SwarmCoefficients {
    pub s_j2: f64,
    pub omega_xy: f64,
    pub epsilon_2: f64,
    pub k_0: f64,
    pub nu: f64,
    pub c1_air: f64,
    pub c4_air: f64,
}

fn to_cstring(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Parse a JSON configuration document. On success writes a heap handle to
/// `out` and returns `Ok`; the caller owns the handle.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn swarm_config_parse(
    json: *const c_char,
    out: *mut *mut SwarmConfig,
) -> SwarmStatus {
    if json.is_null() || out.is_null() {
        return SwarmStatus::InvalidInput;
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => return SwarmStatus::InvalidInput,
    };
    match catch_unwind(|| ExperimentConfig::from_json_str(text)) {
        Ok(Ok(cfg)) => {
            *out = Box::into_raw(Box::new(SwarmConfig { inner: cfg }));
            SwarmStatus::Ok
        }
        Ok(Err(_)) => SwarmStatus::InvalidInput,
        Err(_) => SwarmStatus::Internal,
    }
}

/// Release a configuration handle. A null pointer is ignored.
///
/// # Safety
/// `cfg` must be null or a pointer returned by [`swarm_config_parse`].
#[no_mangle]
pub unsafe extern "C" fn swarm_config_free(cfg: *mut SwarmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Release a string returned by this library. A null pointer is ignored.
///
/// # Safety
/// `s` must be null or a pointer returned by one of these entry points.
#[no_mangle]
pub unsafe extern "C" fn swarm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Human-readable description of a status code.
#[no_mangle]
pub extern "C" fn swarm_status_message(status: SwarmStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        SwarmStatus::Ok => b"ok\0",
        SwarmStatus::GateFailed => b"analysis gate failed\0",
        SwarmStatus::InvalidInput => b"invalid input\0",
        SwarmStatus::Internal => b"internal error\0",
    };
    msg.as_ptr() as *const c_char
}

/// Chi-square quantile with `dof` degrees of freedom at probability `p`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn swarm_chi2_quantile(dof: u32, p: f64, out: *mut f64) -> SwarmStatus {
    if out.is_null() {
        return SwarmStatus::InvalidInput;
    }
    match chi2_quantile(dof, p) {
        Ok(q) => {
            *out = q;
            SwarmStatus::Ok
        }
        Err(_) => SwarmStatus::InvalidInput,
    }
}

/// Margin of the per-edge safety test for a planar Gaussian edge state:
/// `r_c - ||mu|| - sqrt(chi2_{2,1-beta} lambda_max(Sigma))`. Negative
/// margins fail.
///
/// # Safety
/// `out_margin` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn swarm_edge_margin(
    mu_x: f64,
    mu_y: f64,
    sxx: f64,
    sxy: f64,
    syy: f64,
    r_c: f64,
    beta: f64,
    out_margin: *mut f64,
) -> SwarmStatus {
    if out_margin.is_null() {
        return SwarmStatus::InvalidInput;
    }
    let cfg = match swarm_init::safety::SafetyConfig::new(r_c, beta) {
        Ok(c) => c,
        Err(_) => return SwarmStatus::InvalidInput,
    };
    let lam_max = {
        let half_tr = 0.5 * (sxx + syy);
        let half_diff = 0.5 * (sxx - syy);
        half_tr + (half_diff * half_diff + sxy * sxy).max(0.0).sqrt()
    };
    let lam_min = sxx + syy - lam_max;
    if lam_min < -1e-9 * lam_max.abs().max(1e-12) {
        return SwarmStatus::InvalidInput;
    }
    *out_margin = cfg.r_c - mu_x.hypot(mu_y) - cfg.radius(lam_max);
    SwarmStatus::Ok
}

/// Derived coefficients of a parsed configuration, evaluated at the first
/// configured interval.
///
/// # Safety
/// `cfg` must be a handle from [`swarm_config_parse`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn swarm_derived_coefficients(
    cfg: *const SwarmConfig,
    out: *mut SwarmCoefficients,
) -> SwarmStatus {
    if cfg.is_null() || out.is_null() {
        return SwarmStatus::InvalidInput;
    }
    let cfg = &(*cfg).inner;
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<SwarmCoefficients, String> {
        let setup = cfg.analysis_setup().map_err(|e| e.to_string())?;
        let dt = cfg.dt_grid()[0];
        let row = release_policy_nominal(
            &setup.policy,
            &setup.model,
            &setup.drag,
            setup.row_spacing,
            dt,
        )
        .map_err(|e| e.to_string())?;
        Ok(SwarmCoefficients {
            s_j2: setup.model.s_j2,
            omega_xy: setup.model.omega_xy,
            epsilon_2: setup.model.epsilon_2,
            k_0: setup.model.k_0,
            nu: row.nu,
            c1_air: row.increments.c1_air,
            c4_air: row.increments.c4_air,
        })
    }));
    match result {
        Ok(Ok(c)) => {
            *out = c;
            SwarmStatus::Ok
        }
        Ok(Err(_)) => SwarmStatus::InvalidInput,
        Err(_) => SwarmStatus::Internal,
    }
}

/// Largest allowable variance factor for `(n_rows, dt)` under the parsed
/// configuration.
///
/// # Safety
/// `cfg` must be a handle from [`swarm_config_parse`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn swarm_max_allowable_factor(
    cfg: *const SwarmConfig,
    n_rows: u64,
    dt: f64,
    out: *mut f64,
) -> SwarmStatus {
    if cfg.is_null() || out.is_null() || n_rows == 0 {
        return SwarmStatus::InvalidInput;
    }
    let cfg = &(*cfg).inner;
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<f64, String> {
        let setup = cfg.analysis_setup().map_err(|e| e.to_string())?;
        let out = swarm_init::safety::max_allowable_factor(
            &setup,
            n_rows as usize,
            dt,
            swarm_init::safety::DEFAULT_SEARCH_TOL,
        )
        .map_err(|e| e.to_string())?;
        Ok(out.factor)
    }));
    match result {
        Ok(Ok(f)) => {
            *out = f;
            SwarmStatus::Ok
        }
        Ok(Err(_)) => SwarmStatus::InvalidInput,
        Err(_) => SwarmStatus::Internal,
    }
}

/// Sweep CSV for the parsed configuration; the caller frees the string.
///
/// # Safety
/// `cfg` must be a handle from [`swarm_config_parse`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn swarm_sweep_csv(
    cfg: *const SwarmConfig,
    out: *mut *mut c_char,
) -> SwarmStatus {
    if cfg.is_null() || out.is_null() {
        return SwarmStatus::InvalidInput;
    }
    let cfg = &(*cfg).inner;
    match catch_unwind(AssertUnwindSafe(|| report::sweep_csv(cfg))) {
        Ok(Ok(csv)) => {
            *out = to_cstring(csv);
            SwarmStatus::Ok
        }
        Ok(Err(_)) => SwarmStatus::InvalidInput,
        Err(_) => SwarmStatus::Internal,
    }
}

/// Monte Carlo summary JSON for the parsed configuration; the caller frees
/// the string. Returns `GateFailed` when the batch ran but the empirical
/// failure rate exceeded the configured risk level.
///
/// # Safety
/// `cfg` must be a handle from [`swarm_config_parse`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn swarm_montecarlo_summary(
    cfg: *const SwarmConfig,
    out: *mut *mut c_char,
) -> SwarmStatus {
    if cfg.is_null() || out.is_null() {
        return SwarmStatus::InvalidInput;
    }
    let cfg = &(*cfg).inner;
    match catch_unwind(AssertUnwindSafe(|| report::montecarlo_outputs(cfg))) {
        Ok(Ok(outputs)) => {
            *out = to_cstring(outputs.summary_json);
            if outputs.gate_pass {
                SwarmStatus::Ok
            } else {
                SwarmStatus::GateFailed
            }
        }
        Ok(Err(_)) => SwarmStatus::InvalidInput,
        Err(_) => SwarmStatus::Internal,
    }
}
