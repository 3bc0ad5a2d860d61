//! C ABI over `dsa-core`.
//!
//! Every fallible function returns a [`DsaStatus`]; on failure the message is
//! available from [`dsa_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings returned
//! through `char **` out-parameters are released with [`dsa_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dsa_core::channel::{self, PropagationParams};
use dsa_core::harness::{ExperimentConfig, IterationMetrics, RateSummary, Session};
use dsa_core::reservoir::{Reservoir, ReservoirConfig, ReservoirState};
use dsa_core::DsaError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Contract = 4,
    Config = 5,
    Training = 6,
    Parse = 7,
    Io = 8,
    /// The session has already run all configured iterations.
    Finished = 9,
    Panic = 10,
}

/// Outcome fractions for one SU (or the mean over SUs) in one iteration.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DsaRates {
    pub success: f64,
    pub pu_collision: f64,
    pub su_collision: f64,
    pub idle: f64,
    pub mean_reward: f64,
}

impl From<&RateSummary> for DsaRates {
    fn from(r: &RateSummary) -> Self {
        Self {
            success: r.success,
            pu_collision: r.pu_collision,
            su_collision: r.su_collision,
            idle: r.idle,
            mean_reward: r.mean_reward,
        }
    }
}

/// A training run in progress.
pub struct DsaSession {
    inner: Session,
    last: Option<IterationMetrics>,
}

/// A fixed echo state network.
pub struct DsaReservoir {
    inner: Reservoir,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &DsaError) -> DsaStatus {
    match e {
        DsaError::Domain(_) => DsaStatus::Domain,
        DsaError::Contract(_) => DsaStatus::Contract,
        DsaError::Config { .. } => DsaStatus::Config,
        DsaError::Training(_) => DsaStatus::Training,
        DsaError::Parse { .. } => DsaStatus::Parse,
        DsaError::Io { .. } => DsaStatus::Io,
    }
}

struct Fail(DsaStatus, String);

impl From<DsaError> for Fail {
    fn from(e: DsaError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DsaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DsaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DsaStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DsaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DsaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn parse_config(text: &str) -> Result<ExperimentConfig, Fail> {
    let c = ExperimentConfig::from_toml_str(text)?;
    c.validate()?;
    Ok(c)
}

/// Message for the last failed call on this thread. Empty after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn dsa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dsa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn dsa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Path loss in dB at `distance_m` with the default propagation parameters.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn dsa_path_loss_db(distance_m: f64, out: *mut f64) -> DsaStatus {
    guard(|| {
        *out_arg(out, "out")? = channel::path_loss_db(distance_m, &PropagationParams::default())?;
        Ok(())
    })
}

/// Normalized rate log2(1 + sinr/gap) with the default gap.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn dsa_achievable_rate(sinr_linear: f64, out: *mut f64) -> DsaStatus {
    guard(|| {
        *out_arg(out, "out")? = channel::achievable_rate(sinr_linear, &PropagationParams::default())?;
        Ok(())
    })
}

/// Parses and validates a TOML experiment config.
///
/// # Safety
/// `toml` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dsa_config_validate(toml: *const c_char) -> DsaStatus {
    guard(|| parse_config(str_arg(toml, "toml")?).map(drop))
}

/// Creates a session from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsa_session_new(toml: *const c_char, out: *mut *mut DsaSession) -> DsaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let config = parse_config(str_arg(toml, "toml")?)?;
        let inner = Session::new(&config)?;
        *out = Box::into_raw(Box::new(DsaSession { inner, last: None }));
        Ok(())
    })
}

/// Creates a session from a config file; relative snapshot paths resolve against its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsa_session_from_file(path: *const c_char, out: *mut *mut DsaSession) -> DsaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let config = ExperimentConfig::load(Path::new(str_arg(path, "path")?))?;
        config.validate()?;
        let inner = Session::new(&config)?;
        *out = Box::into_raw(Box::new(DsaSession { inner, last: None }));
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a handle from `dsa_session_new` that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn dsa_session_free(session: *mut DsaSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Runs one training iteration and writes the mean rates over SUs to `aggregate` (may be null).
///
/// # Safety
/// `session` must be a live handle; `aggregate` null or valid.
#[no_mangle]
pub unsafe extern "C" fn dsa_session_step(session: *mut DsaSession, aggregate: *mut DsaRates) -> DsaStatus {
    guard(|| {
        let s = out_arg(session, "session")?;
        if s.inner.is_done() {
            return Err(Fail(DsaStatus::Finished, "all iterations already ran".into()));
        }
        let m = s.inner.step()?;
        if let Some(a) = aggregate.as_mut() {
            *a = (&m.aggregate).into();
        }
        s.last = Some(m);
        Ok(())
    })
}

/// Rates of SU `su` in the most recent iteration.
///
/// # Safety
/// `session` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dsa_session_su_rates(session: *const DsaSession, su: usize, out: *mut DsaRates) -> DsaStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        let out = out_arg(out, "out")?;
        let m = s
            .last
            .as_ref()
            .ok_or_else(|| Fail(DsaStatus::Contract, "no iteration has run yet".into()))?;
        let r = m
            .per_su
            .get(su)
            .ok_or_else(|| Fail(DsaStatus::Contract, format!("su {su} out of range")))?;
        *out = r.into();
        Ok(())
    })
}

/// Number of completed iterations, or 0 for a null handle.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsa_session_iteration(session: *const DsaSession) -> usize {
    session.as_ref().map_or(0, |s| s.inner.iteration())
}

/// Number of SUs, or 0 for a null handle.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsa_session_n_sus(session: *const DsaSession) -> usize {
    session.as_ref().map_or(0, |s| s.inner.scenario().n_sus())
}

/// True once all configured iterations ran. Null handles count as done.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsa_session_is_done(session: *const DsaSession) -> bool {
    session.as_ref().is_none_or(|s| s.inner.is_done())
}

/// Checkpoint JSON, including a greedy evaluation. Free with `dsa_string_free`.
///
/// # Safety
/// `session` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dsa_session_checkpoint_json(session: *const DsaSession, out: *mut *mut c_char) -> DsaStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let json = s.inner.checkpoint()?.to_json()?;
        *out = CString::new(json)
            .map_err(|_| Fail(DsaStatus::Contract, "checkpoint contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// Creates a reservoir with `n_input` inputs. Other hyperparameters take their defaults.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsa_reservoir_new(
    n_reservoir: usize,
    n_input: usize,
    spectral_radius: f64,
    seed: u64,
    out: *mut *mut DsaReservoir,
) -> DsaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let config = ReservoirConfig {
            n_reservoir,
            spectral_radius,
            seed,
            ..ReservoirConfig::default()
        };
        let inner = Reservoir::init(config, n_input)?;
        *out = Box::into_raw(Box::new(DsaReservoir { inner }));
        Ok(())
    })
}

/// # Safety
/// `reservoir` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsa_reservoir_free(reservoir: *mut DsaReservoir) {
    if !reservoir.is_null() {
        drop(Box::from_raw(reservoir));
    }
}

/// Reservoir size, or 0 for a null handle.
///
/// # Safety
/// `reservoir` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsa_reservoir_size(reservoir: *const DsaReservoir) -> usize {
    reservoir.as_ref().map_or(0, |r| r.inner.n_reservoir())
}

/// One state update. `state` holds `size` values and is updated in place; `input` holds `n_input`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn dsa_reservoir_update(
    reservoir: *const DsaReservoir,
    state: *mut f64,
    input: *const f64,
    n_input: usize,
) -> DsaStatus {
    guard(|| {
        let r = &reservoir.as_ref().ok_or_else(|| null("reservoir"))?.inner;
        if state.is_null() {
            return Err(null("state"));
        }
        if input.is_null() && n_input > 0 {
            return Err(null("input"));
        }
        let n = r.n_reservoir();
        let state = std::slice::from_raw_parts_mut(state, n);
        let input: &[f64] = if n_input == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(input, n_input)
        };
        let current = ReservoirState(state.to_vec().into());
        let next = r.update_state(&current, input)?;
        state.copy_from_slice(next.0.as_slice());
        Ok(())
    })
}
