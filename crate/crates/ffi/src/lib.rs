//! C ABI over the `lmprior` toolkit.
//!
//! Every fallible function returns an [`LmpStatus`]; on anything other than
//! `LMP_STATUS_OK` the calling thread's last error message is set and
//! output parameters are left untouched. Clients are opaque heap handles
//! released with [`lmp_client_free`]; strings returned by the library are
//! released with [`lmp_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lmprior::causal::{self, CausalError, Direction};
use lmprior::lm::{BackendConfig, LmClient, LmError, TokenScoreRequest};
use lmprior::prompts::{render_rl_prompt, PromptError, DISTANCE_PHRASES};
use lmprior::rlshape::{self, RlError};
use lmprior::Prompt;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmpStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8, or a value the library rejects.
    InvalidArgument = 1,
    /// The language-model backend failed or lacked an entry.
    Backend = 2,
    /// Input data is unusable (degenerate samples, unreadable stub table).
    Data = 3,
    /// A panic was caught inside the library.
    Internal = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmpVerdict {
    XCausesY = 0,
    YCausesX = 1,
}

/// Opaque language-model client.
pub struct LmpClient {
    inner: LmClient,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(LmpStatus, String);

impl Failure {
    fn arg(msg: impl Into<String>) -> Self {
        Failure(LmpStatus::InvalidArgument, msg.into())
    }
}

impl From<LmError> for Failure {
    fn from(e: LmError) -> Self {
        let status = match &e {
            _ if e.is_backend_failure() => LmpStatus::Backend,
            LmError::StubTable { .. } | LmError::Cache(_) => LmpStatus::Data,
            _ => LmpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<PromptError> for Failure {
    fn from(e: PromptError) -> Self {
        Failure::arg(e.to_string())
    }
}

impl From<CausalError> for Failure {
    fn from(e: CausalError) -> Self {
        match e {
            CausalError::Lm(e) => e.into(),
            e => Failure(LmpStatus::Data, e.to_string()),
        }
    }
}

impl From<RlError> for Failure {
    fn from(e: RlError) -> Self {
        match e {
            RlError::Lm(e) => e.into(),
            e @ RlError::NoJudgmentTokens { .. } => Failure(LmpStatus::Backend, e.to_string()),
            e => Failure::arg(e.to_string()),
        }
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LmpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            LmpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside lmprior");
            LmpStatus::Internal
        }
    }
}

/// # Safety
/// `s` must be null or point to a NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure::arg(format!("{name} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Failure::arg(format!("{name} is not valid UTF-8")))
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: a non-null output pointer is writable per the function contracts.
    unsafe { p.as_mut() }.ok_or_else(|| Failure::arg(format!("{name} is null")))
}

fn client_arg<'a>(c: *const LmpClient) -> Result<&'a LmClient, Failure> {
    // SAFETY: a non-null handle came from one of the constructors below.
    unsafe { c.as_ref() }.map(|c| &c.inner).ok_or_else(|| Failure::arg("client is null"))
}

fn finish_client(cfg: &BackendConfig, out: *mut *mut LmpClient) -> Result<(), Failure> {
    let out = out_arg(out, "out")?;
    let inner = LmClient::from_config(cfg)?;
    *out = Box::into_raw(Box::new(LmpClient { inner }));
    Ok(())
}

/// Thread-local message for the last failed call on this thread; empty
/// after a success. Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn lmp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Client backed by a recorded stub table (JSON file).
///
/// # Safety
/// `stub_table_path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lmp_client_new_stub(stub_table_path: *const c_char, out: *mut *mut LmpClient) -> LmpStatus {
    guard(|| finish_client(&BackendConfig::stub(str_arg(stub_table_path, "stub_table_path")?), out))
}

/// Client from a JSON-encoded backend configuration.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lmp_client_new_from_config_json(config_json: *const c_char, out: *mut *mut LmpClient) -> LmpStatus {
    guard(|| {
        let cfg: BackendConfig = serde_json::from_str(str_arg(config_json, "config_json")?)
            .map_err(|e| Failure::arg(format!("config_json: {e}")))?;
        finish_client(&cfg, out)
    })
}

/// # Safety
/// `client` must be null or a handle from a constructor, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lmp_client_free(client: *mut LmpClient) {
    if !client.is_null() {
        drop(Box::from_raw(client));
    }
}

/// Log-probability of each candidate as the first generated token.
/// `out_logprobs` receives `n_candidates` values in input order.
///
/// # Safety
/// `candidates` must hold `n_candidates` NUL-terminated strings and
/// `out_logprobs` must have room for `n_candidates` doubles.
#[no_mangle]
pub unsafe extern "C" fn lmp_score_candidates(
    client: *const LmpClient,
    prompt: *const c_char,
    candidates: *const *const c_char,
    n_candidates: usize,
    out_logprobs: *mut f64,
) -> LmpStatus {
    guard(|| {
        let client = client_arg(client)?;
        let prompt = Prompt::new(str_arg(prompt, "prompt")?)?;
        if candidates.is_null() || out_logprobs.is_null() {
            return Err(Failure::arg("candidates and out_logprobs must be non-null"));
        }
        let cands = std::slice::from_raw_parts(candidates, n_candidates)
            .iter()
            .map(|&c| str_arg(c, "candidate").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let scored = client.score_candidates(&TokenScoreRequest::new(prompt, cands)?)?;
        let out = std::slice::from_raw_parts_mut(out_logprobs, n_candidates);
        for (o, e) in out.iter_mut().zip(&scored.entries) {
            *o = e.logprob;
        }
        Ok(())
    })
}

/// Regression-error direction coefficient of `n` paired samples; positive
/// when `y` is better explained from `x`.
///
/// # Safety
/// `x` and `y` must each point to `n` doubles; `out_rho` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lmp_reci_coefficient(x: *const f64, y: *const f64, n: usize, out_rho: *mut f64) -> LmpStatus {
    guard(|| {
        if x.is_null() || y.is_null() {
            return Err(Failure::arg("x and y must be non-null"));
        }
        let out = out_arg(out_rho, "out_rho")?;
        *out = causal::reci_coefficient(std::slice::from_raw_parts(x, n), std::slice::from_raw_parts(y, n))?;
        Ok(())
    })
}

/// Adds the prior log-ratio to the coefficient's log-odds. Either output
/// pointer may be null.
///
/// # Safety
/// Non-null output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn lmp_combine(
    lm_log_ratio: f64,
    rho: f64,
    out_combined: *mut f64,
    out_verdict: *mut LmpVerdict,
) -> LmpStatus {
    guard(|| {
        if !lm_log_ratio.is_finite() || !(-1.0..=1.0).contains(&rho) {
            return Err(Failure::arg(format!("need finite log ratio and rho in [-1, 1], got {lm_log_ratio}, {rho}")));
        }
        let e = causal::combine(lm_log_ratio, rho);
        if let Some(c) = out_combined.as_mut() {
            *c = e.combined;
        }
        if let Some(v) = out_verdict.as_mut() {
            *v = match e.verdict {
                Direction::XCausesY => LmpVerdict::XCausesY,
                Direction::YCausesX => LmpVerdict::YCausesX,
            };
        }
        Ok(())
    })
}

/// Judgment prompt for distance category `distance` (0 to 3; larger values
/// use category 3). Free the result with [`lmp_string_free`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lmp_render_rl_prompt(distance: u32, out: *mut *mut c_char) -> LmpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let rendered = render_rl_prompt(DISTANCE_PHRASES[(distance as usize).min(3)])?;
        *out = CString::new(rendered.prompt.text()).map_err(|e| Failure::arg(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lmp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `p(Good) - p(Bad)` for distance category `distance`, renormalized over
/// the three judgment tokens.
///
/// # Safety
/// `client` must be a live handle and `out_bonus` writable.
#[no_mangle]
pub unsafe extern "C" fn lmp_elicit_bonus(client: *const LmpClient, distance: u32, out_bonus: *mut f64) -> LmpStatus {
    guard(|| {
        let client = client_arg(client)?;
        let out = out_arg(out_bonus, "out_bonus")?;
        *out = rlshape::elicit_bonus(distance as usize, client)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn null_arguments_are_rejected_with_a_message() {
        let status = unsafe { lmp_client_new_stub(ptr::null(), ptr::null_mut()) };
        assert_eq!(status, LmpStatus::InvalidArgument);
        let msg = unsafe { CStr::from_ptr(lmp_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "stub_table_path is null");
    }

    #[test]
    fn success_clears_the_message() {
        let _ = unsafe { lmp_combine(0.0, 2.0, ptr::null_mut(), ptr::null_mut()) };
        assert!(!unsafe { CStr::from_ptr(lmp_last_error_message()) }.to_bytes().is_empty());
        let mut v = LmpVerdict::YCausesX;
        assert_eq!(unsafe { lmp_combine(0.0, 0.0, ptr::null_mut(), &mut v) }, LmpStatus::Ok);
        assert_eq!(v, LmpVerdict::XCausesY);
        assert!(unsafe { CStr::from_ptr(lmp_last_error_message()) }.to_bytes().is_empty());
    }

    #[test]
    fn panics_become_internal() {
        assert_eq!(guard(|| panic!("boom")), LmpStatus::Internal);
    }
}
