//! C ABI over the multipair-bell library.
//!
//! Every fallible function returns an [`MpbStatus`]; on failure the message
//! is available from [`mpb_last_error`] on the same thread. Scenarios are
//! passed as JSON, in the same shape the library serializes them.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use multipair_bell::bell::{
    critical_efficiency, maximize_ch, noise_resistance, ChEvaluator, Scenario, SettingsMode, SettingsPoint,
};
use multipair_bell::entanglement::{entanglement_distinguishable, entanglement_indistinguishable};
use multipair_bell::optimize::OptimizerSpec;
use multipair_bell::pair::MeasurementAngles;
use multipair_bell::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    UndefinedMetric = 4,
    Unsupported = 5,
    InvalidUtf8 = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpbSettingsMode {
    Alpha = 0,
    AlphaTheta = 1,
    FourAngles = 2,
    Standard = 3,
}

impl From<MpbSettingsMode> for SettingsMode {
    fn from(m: MpbSettingsMode) -> Self {
        match m {
            MpbSettingsMode::Alpha => SettingsMode::Alpha,
            MpbSettingsMode::AlphaTheta => SettingsMode::AlphaTheta,
            MpbSettingsMode::FourAngles => SettingsMode::FourAngles,
            MpbSettingsMode::Standard => SettingsMode::Standard,
        }
    }
}

/// State angle and the four planar measurement angles.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MpbSettings {
    pub theta: f64,
    pub alice1: f64,
    pub alice2: f64,
    pub bob1: f64,
    pub bob2: f64,
}

impl From<MpbSettings> for SettingsPoint {
    fn from(s: MpbSettings) -> Self {
        SettingsPoint { theta: s.theta, angles: MeasurementAngles { alice: [s.alice1, s.alice2], bob: [s.bob1, s.bob2] } }
    }
}

impl From<SettingsPoint> for MpbSettings {
    fn from(p: SettingsPoint) -> Self {
        let a = p.angles;
        MpbSettings { theta: p.theta, alice1: a.alice[0], alice2: a.alice[1], bob1: a.bob[0], bob2: a.bob[1] }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MpbOptimum {
    pub value: f64,
    pub settings: MpbSettings,
    /// Coarse grid cell the refinement started from, or -1.
    pub grid_index: i64,
    pub refine_steps: u64,
}

/// Opaque CH evaluator for one scenario.
pub struct MpbEvaluator {
    inner: ChEvaluator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MpbStatus {
    match e {
        Error::InvalidInput(_) => MpbStatus::InvalidInput,
        Error::Config(_) => MpbStatus::Config,
        Error::UndefinedMetric(_) => MpbStatus::UndefinedMetric,
        Error::Unsupported(_) => MpbStatus::Unsupported,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (MpbStatus, String)>) -> MpbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MpbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MpbStatus::Panic
        }
    }
}

fn lib<T>(r: multipair_bell::Result<T>) -> Result<T, (MpbStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MpbStatus, String) {
    (MpbStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `json` must be null or a valid nul-terminated string.
unsafe fn scenario_from(json: *const c_char) -> Result<Scenario, (MpbStatus, String)> {
    if json.is_null() {
        return Err(null("scenario"));
    }
    let text = CStr::from_ptr(json).to_str().map_err(|e| (MpbStatus::InvalidUtf8, e.to_string()))?;
    let s: Scenario = serde_json::from_str(text).map_err(|e| (MpbStatus::Config, e.to_string()))?;
    lib(s.validate())?;
    Ok(s)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mpb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn mpb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an evaluator from a JSON scenario.
///
/// # Safety
/// `scenario_json` must be a valid nul-terminated string and `out` a valid
/// pointer. Release the handle with [`mpb_evaluator_free`].
#[no_mangle]
pub unsafe extern "C" fn mpb_evaluator_new(scenario_json: *const c_char, out: *mut *mut MpbEvaluator) -> MpbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = scenario_from(scenario_json)?;
        let inner = lib(ChEvaluator::new(&s))?;
        *out = Box::into_raw(Box::new(MpbEvaluator { inner }));
        Ok(())
    })
}

/// # Safety
/// `ev` must be null or a handle from [`mpb_evaluator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mpb_evaluator_free(ev: *mut MpbEvaluator) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

/// CH value at the given state angle and settings.
///
/// # Safety
/// `ev` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpb_evaluator_ch(ev: *const MpbEvaluator, settings: MpbSettings, out: *mut f64) -> MpbStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("evaluator"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lib(ev.inner.ch(&settings.into()))?;
        Ok(())
    })
}

/// Maximizes CH over the parameters that `mode` frees, with default
/// optimizer settings.
///
/// # Safety
/// `ev` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpb_evaluator_maximize(
    ev: *const MpbEvaluator,
    mode: MpbSettingsMode,
    out: *mut MpbOptimum,
) -> MpbStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("evaluator"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let v = lib(maximize_ch(&ev.inner, mode.into(), &OptimizerSpec::default()))?;
        *out = MpbOptimum {
            value: v.value,
            settings: v.settings.into(),
            grid_index: v.grid_index.map_or(-1, |i| i as i64),
            refine_steps: v.refine_steps as u64,
        };
        Ok(())
    })
}

/// Largest white-noise fraction (Werner-equivalent for rotation noise)
/// that keeps a violation; 0 when there is none without noise.
///
/// # Safety
/// `scenario_json` must be a valid nul-terminated string and `epsilon` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpb_noise_resistance(
    scenario_json: *const c_char,
    mode: MpbSettingsMode,
    epsilon: *mut f64,
) -> MpbStatus {
    guard(|| {
        let out = epsilon.as_mut().ok_or_else(|| null("epsilon"))?;
        let s = scenario_from(scenario_json)?;
        *out = lib(noise_resistance(&s, mode.into(), &OptimizerSpec::default()))?.epsilon;
        Ok(())
    })
}

/// Smallest detector efficiency that keeps a violation; 1 when there is
/// none even at unit efficiency.
///
/// # Safety
/// `scenario_json` must be a valid nul-terminated string and `eta` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn mpb_critical_efficiency(
    scenario_json: *const c_char,
    mode: MpbSettingsMode,
    eta: *mut f64,
) -> MpbStatus {
    guard(|| {
        let out = eta.as_mut().ok_or_else(|| null("eta"))?;
        let s = scenario_from(scenario_json)?;
        *out = lib(critical_efficiency(&s, mode.into(), &OptimizerSpec::default()))?.eta;
        Ok(())
    })
}

/// Entanglement in bits of `pairs` distinguishable pairs with the pairing
/// forgotten, and of the symmetric state.
///
/// # Safety
/// Both output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mpb_entanglement(pairs: u32, distinguishable: *mut f64, indistinguishable: *mut f64) -> MpbStatus {
    guard(|| {
        let d = distinguishable.as_mut().ok_or_else(|| null("distinguishable"))?;
        let i = indistinguishable.as_mut().ok_or_else(|| null("indistinguishable"))?;
        *d = lib(entanglement_distinguishable(pairs))?;
        *i = lib(entanglement_indistinguishable(pairs))?;
        Ok(())
    })
}
