use std::ffi::{CStr, CString};
use std::ptr;

use socratic_ffi::*;

fn last_error() -> String {
    let p = soc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn softmax_matches_core() {
    let z = [0.5, -1.0, 2.0, 2.0];
    let mut out = [0.0; 4];
    assert_eq!(unsafe { soc_softmax(z.as_ptr(), 4, out.as_mut_ptr()) }, SocStatus::Ok);
    assert_eq!(out.to_vec(), socratic_core::softmax(&z).unwrap());
    let bad = [f64::NAN];
    assert_eq!(unsafe { soc_softmax(bad.as_ptr(), 1, out.as_mut_ptr()) }, SocStatus::InvalidArgument);
    assert_eq!(unsafe { soc_softmax(ptr::null(), 1, out.as_mut_ptr()) }, SocStatus::NullPointer);
    assert!(last_error().contains("logits"));
}

#[test]
fn metrics() {
    let texts = [c("a a a a")];
    let ptrs: Vec<_> = texts.iter().map(|t| t.as_ptr()).collect();
    let mut d = 0.0;
    assert_eq!(unsafe { soc_distinct_n(ptrs.as_ptr(), 1, 1, &mut d) }, SocStatus::Ok);
    assert_eq!(d, 0.25);
    assert_eq!(unsafe { soc_distinct_n(ptrs.as_ptr(), 1, 0, &mut d) }, SocStatus::InvalidArgument);

    let rs = [c("What evidence supports that?"), c("You will be fine.")];
    let ptrs: Vec<_> = rs.iter().map(|t| t.as_ptr()).collect();
    let mut p = 0.0;
    assert_eq!(unsafe { soc_pqa(ptrs.as_ptr(), 2, &mut p) }, SocStatus::Ok);
    assert_eq!(p, 0.5);
    assert_eq!(unsafe { soc_pqa(ptrs.as_ptr(), 0, &mut p) }, SocStatus::InvalidArgument);

    let invalid = [0xffu8, 0xfe, 0];
    let ptrs = [invalid.as_ptr().cast()];
    assert_eq!(unsafe { soc_pqa(ptrs.as_ptr(), 1, &mut p) }, SocStatus::InvalidUtf8);
}

#[test]
fn planner_roundtrip() {
    let planner = soc_planner_new_rule();
    let (mut s, mut m) = (u32::MAX, u32::MAX);
    let mut json: *mut libc::c_char = ptr::null_mut();
    let history = c(r#"[{"seeker":"I feel low","supporter":"I'm sorry to hear that."}]"#);
    let utt = c("I always fail completely");
    let rc = unsafe { soc_planner_plan(planner, history.as_ptr(), utt.as_ptr(), &mut s, &mut m, &mut json) };
    assert_eq!(rc, SocStatus::Ok);
    let method = unsafe { CStr::from_ptr(soc_method_label(m)) }.to_str().unwrap();
    assert_eq!(method, "definition");
    let signal: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    assert_eq!(signal["method"], "definition");
    unsafe { soc_string_free(json) };

    let bad = c("not json");
    let rc = unsafe { soc_planner_plan(planner, bad.as_ptr(), utt.as_ptr(), &mut s, &mut m, ptr::null_mut()) };
    assert_eq!(rc, SocStatus::ParseError);
    let rc = unsafe { soc_planner_plan(ptr::null(), ptr::null(), utt.as_ptr(), &mut s, &mut m, ptr::null_mut()) };
    assert_eq!(rc, SocStatus::NullPointer);
    unsafe { soc_planner_free(planner) };
    unsafe { soc_planner_free(ptr::null_mut()) };
}

#[test]
fn rubric_handles() {
    let mut r: *mut SocRubric = ptr::null_mut();
    let bad = c(r#"{"weights":{"guidance":0.1,"empathy":0.2,"semantic_relevance":0.15,"interrogative_structure":0.15,"conciseness":0.1,"diversity":0.1,"tone_friendliness":0.1}}"#);
    assert_eq!(unsafe { soc_rubric_from_json(bad.as_ptr(), &mut r) }, SocStatus::InvalidArgument);
    assert!(last_error().contains("sum"));
    assert!(r.is_null());

    let r = soc_rubric_new_default();
    let conv = c(r#"{"conversation_id":"x","metadata":{"topic":"anxiety"},"turns":[{"seeker":"I worry all the time","supporter":null}]}"#);
    let cand = c("That sounds hard. What worries you most?");
    let (mut plain, mut adjusted) = (0.0, 0.0);
    let mut dims = [0.0; 7];
    assert_eq!(unsafe { soc_rubric_score(r, conv.as_ptr(), cand.as_ptr(), 0, &mut plain, dims.as_mut_ptr()) }, SocStatus::Ok);
    let mut w = [0.0; 7];
    assert_eq!(unsafe { soc_rubric_weights(r, w.as_mut_ptr()) }, SocStatus::Ok);
    let dot: f64 = w.iter().zip(dims).map(|(a, b)| a * b).sum();
    assert!((dot - plain).abs() < 1e-12);
    assert_eq!(unsafe { soc_rubric_score(r, conv.as_ptr(), cand.as_ptr(), 1, &mut adjusted, ptr::null_mut()) }, SocStatus::Ok);
    let shifted = [0.20, 0.30, 0.15, 0.15, 0.05, 0.10, 0.05];
    let expect: f64 = shifted.iter().zip(dims).map(|(a, b)| a * b).sum();
    assert!((adjusted - expect).abs() < 1e-12);
    let junk = c("{");
    assert_eq!(unsafe { soc_rubric_score(r, junk.as_ptr(), cand.as_ptr(), 0, &mut plain, ptr::null_mut()) }, SocStatus::ParseError);
    unsafe { soc_rubric_free(r) };
}
