//! C ABI for the `ultradian` toolkit.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! producer functions and released with the matching `*_free`. Every
//! fallible function returns an [`UltradianStatus`]; on failure
//! [`ultradian_last_error`] gives a message for the calling thread.
//! Results are written through out-pointers, which are left untouched on
//! failure.
//!
//! ```c
//! UltradianParams *p = ultradian_params_new();
//! UltradianProtocol proto = ultradian_protocol_on_off(1.35, 60.0, 30.0);
//! UltradianTrajectory *traj = NULL;
//! if (ultradian_simulate(p, &proto, 0.05, 20000.0, &traj) != ULTRADIAN_STATUS_OK) {
//!     fprintf(stderr, "%s\n", ultradian_last_error());
//! }
//! ultradian_trajectory_free(traj);
//! ultradian_params_free(p);
//! ```

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ultradian::analysis::{classify, AnalysisConfig, Classification};
use ultradian::dde::{IntegratorConfig, Trajectory};
use ultradian::forcing::{InfusionProtocol, ProtocolKind, DEFAULT_STEEPNESS};
use ultradian::linear::{char_coeffs, hopf_curve, CurveOptions, HopfCurve};
use ultradian::model::{equilibrium, ModelParams};
use ultradian::simulate::simulate_default;
use ultradian::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UltradianStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Integration produced a non-finite state.
    NonFinite = 3,
    /// Query outside a stored range.
    OutOfRange = 4,
    /// Equilibrium not found or not certified.
    NoEquilibrium = 5,
    /// Hopf curve does not exist for these coefficients.
    NoHopfCurve = 6,
    /// Simulation span too short for classification.
    SpanTooShort = 7,
    Panic = 8,
    Other = 9,
}

pub const ULTRADIAN_PROTOCOL_CONSTANT: i32 = 0;
pub const ULTRADIAN_PROTOCOL_ON_OFF: i32 = 1;

pub const ULTRADIAN_CLASS_STEADY: i32 = 0;
pub const ULTRADIAN_CLASS_PERIODIC: i32 = 1;
pub const ULTRADIAN_CLASS_LOCKED: i32 = 2;
pub const ULTRADIAN_CLASS_QUASI_PERIODIC: i32 = 3;
pub const ULTRADIAN_CLASS_BOUNDARY: i32 = 4;

/// Infusion protocol. Rates in mg dl⁻¹ min⁻¹, times in minutes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UltradianProtocol {
    /// `ULTRADIAN_PROTOCOL_CONSTANT` or `ULTRADIAN_PROTOCOL_ON_OFF`.
    pub kind: i32,
    pub g_max: f64,
    pub t_period: f64,
    pub t_on: f64,
    pub sigma: f64,
    pub k: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UltradianEquilibrium {
    /// mg/dl
    pub g_star: f64,
    /// uU/ml
    pub i_star: f64,
    pub residual_glucose: f64,
    pub residual_insulin: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UltradianSummary {
    /// One of the `ULTRADIAN_CLASS_*` constants.
    pub classification: i32,
    /// Locking ratio; zero unless locked.
    pub p: u32,
    pub q: u32,
    /// Response period in minutes, NaN when absent.
    pub period: f64,
    pub g_max: f64,
    pub g_min: f64,
    pub i_max: f64,
    pub i_min: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UltradianHopfSample {
    pub omega: f64,
    pub tau_i: f64,
    pub tau_g: f64,
    pub residual: f64,
}

/// Opaque model parameters.
pub struct UltradianParams(ModelParams);

/// Opaque simulated trajectory.
pub struct UltradianTrajectory {
    traj: Trajectory<2>,
    params: ModelParams,
}

/// Opaque sampled Hopf curve.
pub struct UltradianHopfCurve(HopfCurve);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> UltradianStatus {
    match e {
        Error::InvalidParameter { .. } | Error::Config { .. } => UltradianStatus::InvalidArgument,
        Error::NonFinite { .. } => UltradianStatus::NonFinite,
        Error::OutOfRange { .. } => UltradianStatus::OutOfRange,
        Error::NoEquilibrium { .. } | Error::Uncertified { .. } => UltradianStatus::NoEquilibrium,
        Error::Existence(_) | Error::OutsideDomain { .. } => UltradianStatus::NoHopfCurve,
        Error::SpanTooShort { .. } => UltradianStatus::SpanTooShort,
        _ => UltradianStatus::Other,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), UltradianStatus>) -> UltradianStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UltradianStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            UltradianStatus::Panic
        }
    }
}

fn fail(e: Error) -> UltradianStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> UltradianStatus {
    set_error(format!("null pointer: {what}"));
    UltradianStatus::NullPointer
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, UltradianStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, UltradianStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

fn to_protocol(p: &UltradianProtocol) -> Result<InfusionProtocol, UltradianStatus> {
    let kind = match p.kind {
        ULTRADIAN_PROTOCOL_CONSTANT => ProtocolKind::Constant,
        ULTRADIAN_PROTOCOL_ON_OFF => ProtocolKind::OnOff,
        other => {
            set_error(format!("unknown protocol kind {other}"));
            return Err(UltradianStatus::InvalidArgument);
        }
    };
    let proto = InfusionProtocol {
        kind,
        g_max: p.g_max,
        period: p.t_period,
        on_time: p.t_on,
        lag: p.sigma,
        steepness: p.k,
    };
    proto.validate().map_err(fail)?;
    Ok(proto)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ultradian_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ultradian_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Default model parameters (delays 5 and 20 min). Free with
/// [`ultradian_params_free`].
#[no_mangle]
pub extern "C" fn ultradian_params_new() -> *mut UltradianParams {
    Box::into_raw(Box::new(UltradianParams(ModelParams::default())))
}

/// # Safety
/// `params` must come from [`ultradian_params_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ultradian_params_free(params: *mut UltradianParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

fn with_param_table<R>(p: &mut ModelParams, f: impl FnOnce(&mut param_table::Table) -> Result<R, UltradianStatus>) -> Result<R, UltradianStatus> {
    let mut table = param_table::to_table(p);
    let out = f(&mut table)?;
    *p = param_table::from_table(table).map_err(|msg| {
        set_error(msg);
        UltradianStatus::InvalidArgument
    })?;
    Ok(out)
}

/// Sets a parameter by its symbol (`"R_m"`, `"tau_I"`, ...).
///
/// # Safety
/// `params` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ultradian_params_set(params: *mut UltradianParams, name: *const c_char, value: f64) -> UltradianStatus {
    guard(|| {
        let p = as_mut(params, "params")?;
        let name = cstr(name, "name")?;
        let mut candidate = p.0;
        with_param_table(&mut candidate, |t| {
            if !t.contains_key(name) {
                set_error(format!("unknown parameter `{name}`"));
                return Err(UltradianStatus::InvalidArgument);
            }
            t.insert(name.to_string(), value);
            Ok(())
        })?;
        candidate.validate().map_err(fail)?;
        p.0 = candidate;
        Ok(())
    })
}

/// Reads a parameter by its symbol.
///
/// # Safety
/// `params` must be a live handle, `name` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ultradian_params_get(params: *const UltradianParams, name: *const c_char, out: *mut f64) -> UltradianStatus {
    guard(|| {
        let p = as_ref(params, "params")?;
        let name = cstr(name, "name")?;
        let out = as_mut(out, "out")?;
        let table = param_table::to_table(&p.0);
        match table.get(name) {
            Some(v) => {
                *out = *v;
                Ok(())
            }
            None => {
                set_error(format!("unknown parameter `{name}`"));
                Err(UltradianStatus::InvalidArgument)
            }
        }
    })
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, UltradianStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        UltradianStatus::InvalidArgument
    })
}

/// Constant infusion at `rate` mg dl⁻¹ min⁻¹.
#[no_mangle]
pub extern "C" fn ultradian_protocol_constant(rate: f64) -> UltradianProtocol {
    UltradianProtocol {
        kind: ULTRADIAN_PROTOCOL_CONSTANT,
        g_max: rate,
        t_period: 0.0,
        t_on: 0.0,
        sigma: 0.0,
        k: DEFAULT_STEEPNESS,
    }
}

/// Smooth on-off infusion with zero lag and the default steepness.
#[no_mangle]
pub extern "C" fn ultradian_protocol_on_off(g_max: f64, t_period: f64, t_on: f64) -> UltradianProtocol {
    UltradianProtocol {
        kind: ULTRADIAN_PROTOCOL_ON_OFF,
        g_max,
        t_period,
        t_on,
        sigma: 0.0,
        k: DEFAULT_STEEPNESS,
    }
}

/// Infusion rate of `protocol` at time `t`.
///
/// # Safety
/// `protocol` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ultradian_protocol_rate(protocol: *const UltradianProtocol, t: f64, out: *mut f64) -> UltradianStatus {
    guard(|| {
        let proto = to_protocol(as_ref(protocol, "protocol")?)?;
        *as_mut(out, "out")? = proto.rate(t);
        Ok(())
    })
}

/// Certified equilibrium under constant infusion `g_in`.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ultradian_equilibrium(params: *const UltradianParams, g_in: f64, out: *mut UltradianEquilibrium) -> UltradianStatus {
    guard(|| {
        let p = as_ref(params, "params")?;
        let out = as_mut(out, "out")?;
        let eq = equilibrium(&p.0, g_in).map_err(fail)?;
        *out = UltradianEquilibrium {
            g_star: eq.g_star,
            i_star: eq.i_star,
            residual_glucose: eq.residual_glucose,
            residual_insulin: eq.residual_insulin,
        };
        Ok(())
    })
}

/// Integrates from the default history (100 mg/dl, 20 uU/ml) over
/// `[0, span]` with step `dt`. A `span <= 0` selects the span needed by
/// [`ultradian_classify`] with default thresholds.
///
/// # Safety
/// `params` and `protocol` must be valid; `out` must be writable. The
/// handle written to `*out` is released with [`ultradian_trajectory_free`].
#[no_mangle]
pub unsafe extern "C" fn ultradian_simulate(
    params: *const UltradianParams,
    protocol: *const UltradianProtocol,
    dt: f64,
    span: f64,
    out: *mut *mut UltradianTrajectory,
) -> UltradianStatus {
    guard(|| {
        let p = as_ref(params, "params")?.0;
        let proto = to_protocol(as_ref(protocol, "protocol")?)?;
        let out = as_mut(out, "out")?;
        let span = if span > 0.0 {
            span
        } else {
            AnalysisConfig::default().required_span(&proto, p.delays())
        };
        let traj = simulate_default(&p, &proto, &IntegratorConfig::new(dt, span)).map_err(fail)?;
        *out = Box::into_raw(Box::new(UltradianTrajectory { traj, params: p }));
        Ok(())
    })
}

/// # Safety
/// `traj` must come from [`ultradian_simulate`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ultradian_trajectory_free(traj: *mut UltradianTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// End time of the trajectory (min); 0 for a null handle.
///
/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ultradian_trajectory_span(traj: *const UltradianTrajectory) -> f64 {
    traj.as_ref().map_or(0.0, |t| t.traj.span())
}

/// Glucose (mg/dl) and insulin (uU/ml) at time `t`.
///
/// # Safety
/// `traj` must be a live handle; `glucose` and `insulin` writable.
#[no_mangle]
pub unsafe extern "C" fn ultradian_trajectory_sample(
    traj: *const UltradianTrajectory,
    t: f64,
    glucose: *mut f64,
    insulin: *mut f64,
) -> UltradianStatus {
    guard(|| {
        let tr = as_ref(traj, "traj")?;
        let g = as_mut(glucose, "glucose")?;
        let i = as_mut(insulin, "insulin")?;
        let x = tr.traj.sample(t).map_err(fail)?;
        *g = tr.params.glucose_concentration(x[0]);
        *i = tr.params.insulin_concentration(x[1]);
        Ok(())
    })
}

/// Classifies the long-term response with default thresholds. `protocol`
/// must be the one used for the simulation.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ultradian_classify(
    traj: *const UltradianTrajectory,
    protocol: *const UltradianProtocol,
    out: *mut UltradianSummary,
) -> UltradianStatus {
    guard(|| {
        let tr = as_ref(traj, "traj")?;
        let proto = to_protocol(as_ref(protocol, "protocol")?)?;
        let out = as_mut(out, "out")?;
        let s = classify(&tr.traj, &tr.params, &proto, &AnalysisConfig::default()).map_err(fail)?;
        let (class, p, q) = match s.classification {
            Classification::Steady => (ULTRADIAN_CLASS_STEADY, 0, 0),
            Classification::Periodic => (ULTRADIAN_CLASS_PERIODIC, 0, 0),
            Classification::Locked { p, q } => (ULTRADIAN_CLASS_LOCKED, p, q),
            Classification::QuasiPeriodic => (ULTRADIAN_CLASS_QUASI_PERIODIC, 0, 0),
            Classification::Boundary => (ULTRADIAN_CLASS_BOUNDARY, 0, 0),
        };
        *out = UltradianSummary {
            classification: class,
            p,
            q,
            period: s.period.unwrap_or(f64::NAN),
            g_max: s.g_max,
            g_min: s.g_min,
            i_max: s.i_max,
            i_min: s.i_min,
        };
        Ok(())
    })
}

/// Principal-branch Hopf curve at constant infusion `g_in`, sampled on
/// `samples` uniform frequencies before refinement.
///
/// # Safety
/// `params` must be a live handle and `out` writable. Release the curve
/// with [`ultradian_hopf_curve_free`].
#[no_mangle]
pub unsafe extern "C" fn ultradian_hopf_curve(
    params: *const UltradianParams,
    g_in: f64,
    samples: usize,
    out: *mut *mut UltradianHopfCurve,
) -> UltradianStatus {
    guard(|| {
        let p = as_ref(params, "params")?;
        let out = as_mut(out, "out")?;
        let eq = equilibrium(&p.0, g_in).map_err(fail)?;
        let opts = CurveOptions {
            samples,
            ..CurveOptions::default()
        };
        let curve = hopf_curve(&char_coeffs(&p.0, &eq), &opts).map_err(fail)?;
        *out = Box::into_raw(Box::new(UltradianHopfCurve(curve)));
        Ok(())
    })
}

/// # Safety
/// `curve` must come from [`ultradian_hopf_curve`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ultradian_hopf_curve_free(curve: *mut UltradianHopfCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `curve` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ultradian_hopf_curve_len(curve: *const UltradianHopfCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.0.samples.len())
}

/// Sample `index`, ordered by increasing frequency.
///
/// # Safety
/// `curve` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ultradian_hopf_curve_get(
    curve: *const UltradianHopfCurve,
    index: usize,
    out: *mut UltradianHopfSample,
) -> UltradianStatus {
    guard(|| {
        let c = as_ref(curve, "curve")?;
        let out = as_mut(out, "out")?;
        let Some(s) = c.0.samples.get(index) else {
            set_error(format!("index {index} out of range ({} samples)", c.0.samples.len()));
            return Err(UltradianStatus::OutOfRange);
        };
        *out = UltradianHopfSample {
            omega: s.omega,
            tau_i: s.tau_i,
            tau_g: s.tau_g,
            residual: s.residual,
        };
        Ok(())
    })
}

/// Largest |χ(iω)| over the curve; NaN for a null handle.
///
/// # Safety
/// `curve` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ultradian_hopf_curve_max_residual(curve: *const UltradianHopfCurve) -> f64 {
    curve.as_ref().map_or(f64::NAN, |c| c.0.max_residual())
}

// Parameter access by symbol goes through the serde names of ModelParams.
mod param_table {
    use std::collections::BTreeMap;

    use ultradian::model::ModelParams;

    pub type Table = BTreeMap<String, f64>;

    pub fn to_table(p: &ModelParams) -> Table {
        let v = serde_json::to_value(p).expect("params serialize");
        serde_json::from_value(v).expect("params are a flat map of numbers")
    }

    pub fn from_table(t: Table) -> Result<ModelParams, String> {
        let v = serde_json::to_value(t).map_err(|e| e.to_string())?;
        serde_json::from_value(v).map_err(|e| e.to_string())
    }
}
