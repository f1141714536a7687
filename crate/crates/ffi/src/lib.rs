//! C ABI over `socratic-core`.
//!
//! Functions return a [`SocStatus`]; on failure, [`soc_last_error`] describes
//! the most recent error on the calling thread. Planners and rubrics are
//! opaque handles released with their `_free` function. Strings returned
//! through `char **` outputs are owned by the caller and released with
//! [`soc_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, c_double, c_int, size_t};
use socratic_core::eval::{distinct_n, pqa};
use socratic_core::forge::{adjust_rubric_for_anxiety, score_candidate, ScoringRubric};
use socratic_core::model::{parse_conversation_line, truncate_turns, Label, DEFAULT_BUDGET_UNITS};
use socratic_core::{softmax, Planner, Turn};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    BackendError = 5,
    Panic = 6,
}

/// Rule-based strategy and method planner.
pub struct SocPlanner {
    inner: Planner,
}

/// Seven-dimension scoring rubric.
pub struct SocRubric {
    inner: ScoringRubric,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(SocStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SocStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            SocStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(SocStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(SocStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn str_array<'a>(p: *const *const c_char, count: size_t, name: &str) -> Result<Vec<&'a str>, Fail> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Fail(SocStatus::NullPointer, format!("{name} is null")));
    }
    std::slice::from_raw_parts(p, count)
        .iter()
        .enumerate()
        .map(|(i, s)| str_arg(*s, &format!("{name}[{i}]")))
        .collect()
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(SocStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn soc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn soc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Canonical strategy label for `index`, or NULL when out of range. The
/// string is static.
#[no_mangle]
pub extern "C" fn soc_strategy_label(index: u32) -> *const c_char {
    static LABELS: [&[u8]; 10] = [
        b"question\0",
        b"reflection_of_feelings\0",
        b"self_disclosure\0",
        b"others\0",
        b"information\0",
        b"providing_suggestions\0",
        b"role_play\0",
        b"restatement_or_paraphrasing\0",
        b"unknown\0",
        b"affirmation_and_reassurance\0",
    ];
    LABELS.get(index as usize).map_or(ptr::null(), |s| s.as_ptr().cast())
}

/// Canonical Socratic method label for `index`, or NULL when out of range.
#[no_mangle]
pub extern "C" fn soc_method_label(index: u32) -> *const c_char {
    static LABELS: [&[u8]; 6] = [
        b"definition\0",
        b"counter_questioning\0",
        b"maieutics\0",
        b"dialectics\0",
        b"counterfactual_reasoning\0",
        b"other\0",
    ];
    LABELS.get(index as usize).map_or(ptr::null(), |s| s.as_ptr().cast())
}

/// Writes the softmax of `len` logits to `out`.
///
/// # Safety
/// `logits` and `out` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn soc_softmax(logits: *const c_double, len: size_t, out: *mut c_double) -> SocStatus {
    guard(|| {
        if len == 0 {
            return Err(Fail(SocStatus::InvalidArgument, "no logits".into()));
        }
        if logits.is_null() {
            return Err(Fail(SocStatus::NullPointer, "logits is null".into()));
        }
        out_ptr(out, "out")?;
        let z = std::slice::from_raw_parts(logits, len);
        let p = softmax(z).map_err(|e| Fail(SocStatus::InvalidArgument, e.to_string()))?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&p);
        Ok(())
    })
}

/// Distinct-n over `count` texts.
///
/// # Safety
/// `texts` must point to `count` NUL-terminated strings; `out` to a double.
#[no_mangle]
pub unsafe extern "C" fn soc_distinct_n(
    texts: *const *const c_char,
    count: size_t,
    n: size_t,
    out: *mut c_double,
) -> SocStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if n == 0 {
            return Err(Fail(SocStatus::InvalidArgument, "n must be positive".into()));
        }
        let texts = str_array(texts, count, "texts")?;
        *out = distinct_n(&texts, n);
        Ok(())
    })
}

/// Rule-mode proactive questioning score over `count` responses.
///
/// # Safety
/// `responses` must point to `count` NUL-terminated strings; `out` to a double.
#[no_mangle]
pub unsafe extern "C" fn soc_pqa(responses: *const *const c_char, count: size_t, out: *mut c_double) -> SocStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let rs = str_array(responses, count, "responses")?;
        *out = pqa(&rs, None).map_err(|e| Fail(SocStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// A planner using the built-in rule tables.
#[no_mangle]
pub extern "C" fn soc_planner_new_rule() -> *mut SocPlanner {
    Box::into_raw(Box::new(SocPlanner { inner: Planner::rule() }))
}

/// # Safety
/// `planner` must come from [`soc_planner_new_rule`] and not be used after.
#[no_mangle]
pub unsafe extern "C" fn soc_planner_free(planner: *mut SocPlanner) {
    if !planner.is_null() {
        drop(Box::from_raw(planner));
    }
}

/// Plans the next turn for `utterance`. `history_json` is NULL or a JSON array
/// of `{"seeker": str, "supporter": str|null}`. Writes the strategy and method
/// indices and, when `out_json` is non-NULL, the full planning signal as JSON.
///
/// # Safety
/// Pointers must be valid; `out_json` receives a string to release with
/// [`soc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn soc_planner_plan(
    planner: *const SocPlanner,
    history_json: *const c_char,
    utterance: *const c_char,
    out_strategy: *mut u32,
    out_method: *mut u32,
    out_json: *mut *mut c_char,
) -> SocStatus {
    guard(|| {
        if planner.is_null() {
            return Err(Fail(SocStatus::NullPointer, "planner is null".into()));
        }
        out_ptr(out_strategy, "out_strategy")?;
        out_ptr(out_method, "out_method")?;
        let utterance = str_arg(utterance, "utterance")?;
        let history: Vec<Turn> = if history_json.is_null() {
            Vec::new()
        } else {
            #[derive(serde::Deserialize)]
            struct T {
                seeker: String,
                supporter: Option<String>,
            }
            let raw: Vec<T> = serde_json::from_str(str_arg(history_json, "history_json")?)
                .map_err(|e| Fail(SocStatus::ParseError, e.to_string()))?;
            raw.into_iter()
                .enumerate()
                .map(|(index, t)| Turn { index, seeker_utterance: t.seeker, supporter_response: t.supporter })
                .collect()
        };
        let ctx = truncate_turns(&history, utterance, DEFAULT_BUDGET_UNITS)
            .map_err(|e| Fail(SocStatus::InvalidArgument, e.to_string()))?;
        let signal = (*planner).inner.plan(&ctx).map_err(|e| Fail(SocStatus::BackendError, e.to_string()))?;
        *out_strategy = signal.strategy.index() as u32;
        *out_method = signal.method.index() as u32;
        if !out_json.is_null() {
            *out_json = into_c_string(serde_json::to_string(&signal).expect("signal serializes"));
        }
        Ok(())
    })
}

/// The default rubric.
#[no_mangle]
pub extern "C" fn soc_rubric_new_default() -> *mut SocRubric {
    Box::into_raw(Box::new(SocRubric { inner: ScoringRubric::default() }))
}

/// Parses and validates a rubric from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn soc_rubric_from_json(json: *const c_char, out: *mut *mut SocRubric) -> SocStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let r = ScoringRubric::from_json(str_arg(json, "json")?)
            .map_err(|e| Fail(SocStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(SocRubric { inner: r }));
        Ok(())
    })
}

/// # Safety
/// `rubric` must come from this library and not be used after.
#[no_mangle]
pub unsafe extern "C" fn soc_rubric_free(rubric: *mut SocRubric) {
    if !rubric.is_null() {
        drop(Box::from_raw(rubric));
    }
}

/// Copies the seven weights, in rubric order, to `out`.
///
/// # Safety
/// `out` must point to 7 doubles.
#[no_mangle]
pub unsafe extern "C" fn soc_rubric_weights(rubric: *const SocRubric, out: *mut c_double) -> SocStatus {
    guard(|| {
        if rubric.is_null() {
            return Err(Fail(SocStatus::NullPointer, "rubric is null".into()));
        }
        out_ptr(out, "out")?;
        std::slice::from_raw_parts_mut(out, 7).copy_from_slice(&(*rubric).inner.weights.to_array());
        Ok(())
    })
}

/// Scores `candidate` as the reply to the last seeker turn of
/// `conversation_json` (one corpus line). With `adjust_for_anxiety` non-zero,
/// anxiety-related dialogues are scored with the shifted weights. Writes the
/// total and, when `out_dims` is non-NULL, the seven dimension scores.
///
/// # Safety
/// Pointers must be valid; `out_dims` must be NULL or point to 7 doubles.
#[no_mangle]
pub unsafe extern "C" fn soc_rubric_score(
    rubric: *const SocRubric,
    conversation_json: *const c_char,
    candidate: *const c_char,
    adjust_for_anxiety: c_int,
    out_total: *mut c_double,
    out_dims: *mut c_double,
) -> SocStatus {
    guard(|| {
        if rubric.is_null() {
            return Err(Fail(SocStatus::NullPointer, "rubric is null".into()));
        }
        out_ptr(out_total, "out_total")?;
        let conv = parse_conversation_line(str_arg(conversation_json, "conversation_json")?)
            .map_err(|e| Fail(SocStatus::ParseError, e.to_string()))?;
        let candidate = str_arg(candidate, "candidate")?;
        let base = &(*rubric).inner;
        let adjusted;
        let rubric = if adjust_for_anxiety != 0 {
            adjusted = adjust_rubric_for_anxiety(base, &conv);
            &adjusted
        } else {
            base
        };
        let s = score_candidate(candidate, &conv, rubric, None);
        *out_total = s.total;
        if !out_dims.is_null() {
            std::slice::from_raw_parts_mut(out_dims, 7).copy_from_slice(&s.per_dimension.to_array());
        }
        Ok(())
    })
}
