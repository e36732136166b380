use std::ffi::{CStr, CString};
use std::ptr;

use kgnav_ffi::*;

const CORPUS: &str = r#"{"doc_id":"d1","title":"Harbor","text":"Alice Marlow sailed from Dover.\n\nShe met Tom Reyes at the dock."}
{"doc_id":"d2","title":"Lighthouse","text":"Tom Reyes kept the lighthouse at Calder Bay."}
"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { kgnav_string_free(p) };
    s
}

fn last_error() -> String {
    let p = kgnav_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn build(dir: &tempfile::TempDir) -> *mut KgnavEngine {
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(&corpus, CORPUS).unwrap();
    let mut engine = ptr::null_mut();
    let path = c(corpus.to_str().unwrap());
    let st = unsafe { kgnav_engine_build(path.as_ptr(), ptr::null(), &mut engine) };
    assert_eq!(st, KgnavStatus::Ok);
    engine
}

#[test]
fn build_ask_save_open_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let engine = build(&dir);

    let mut out = ptr::null_mut();
    let q = c("Who did Alice Marlow meet?");
    let ctrl = c("heuristic");
    let st = unsafe {
        kgnav_ask(
            engine,
            q.as_ptr(),
            ctrl.as_ptr(),
            ptr::null(),
            ptr::null(),
            true,
            &mut out,
        )
    };
    assert_eq!(st, KgnavStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["evidence"]["controller"], "heuristic");
    assert_eq!(v["evidence"]["items"].as_array().unwrap().len(), 2);
    assert!(v["trace"].as_str().unwrap().lines().count() > 2);

    let snap = c(dir.path().join("snap.json").to_str().unwrap());
    assert_eq!(unsafe { kgnav_engine_save(engine, snap.as_ptr()) }, KgnavStatus::Ok);
    let mut reopened = ptr::null_mut();
    assert_eq!(
        unsafe { kgnav_engine_open(snap.as_ptr(), &mut reopened) },
        KgnavStatus::Ok
    );

    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    assert_eq!(
        unsafe { kgnav_entity_search(engine, q.as_ptr(), 10, &mut a) },
        KgnavStatus::Ok
    );
    assert_eq!(
        unsafe { kgnav_entity_search(reopened, q.as_ptr(), 10, &mut b) },
        KgnavStatus::Ok
    );
    let (a, b) = (take(a), take(b));
    assert_eq!(a, b);
    assert!(a.contains("Alice Marlow"));

    let triples = dir.path().join("g.nt");
    let tp = c(triples.to_str().unwrap());
    assert_eq!(unsafe { kgnav_export_triples(reopened, tp.as_ptr()) }, KgnavStatus::Ok);
    assert!(std::fs::read_to_string(&triples).unwrap().contains("<isChunkOf>"));

    unsafe {
        kgnav_engine_free(engine);
        kgnav_engine_free(reopened);
    }
}

#[test]
fn errors_are_reported_with_codes() {
    let dir = tempfile::tempdir().unwrap();
    let engine = build(&dir);
    let mut out = ptr::null_mut();
    let q = c("anything");
    let bad = c("frobnicate");
    let st = unsafe {
        kgnav_ask(
            engine,
            q.as_ptr(),
            bad.as_ptr(),
            ptr::null(),
            ptr::null(),
            false,
            &mut out,
        )
    };
    assert_eq!(st, KgnavStatus::Usage);
    assert!(out.is_null());
    assert!(last_error().contains("frobnicate"));

    let llm = c("llm");
    let st = unsafe {
        kgnav_ask(
            engine,
            q.as_ptr(),
            llm.as_ptr(),
            ptr::null(),
            ptr::null(),
            false,
            &mut out,
        )
    };
    assert_eq!(st, KgnavStatus::Usage);

    let cfg = c(r#"{"k": 0}"#);
    let vec = c("vector");
    let st = unsafe {
        kgnav_ask(
            engine,
            q.as_ptr(),
            vec.as_ptr(),
            cfg.as_ptr(),
            ptr::null(),
            false,
            &mut out,
        )
    };
    assert_eq!(st, KgnavStatus::Validation);

    let st = unsafe {
        kgnav_ask(
            ptr::null(),
            q.as_ptr(),
            vec.as_ptr(),
            ptr::null(),
            ptr::null(),
            false,
            &mut out,
        )
    };
    assert_eq!(st, KgnavStatus::NullArgument);

    let missing = c(dir.path().join("nope.json").to_str().unwrap());
    let mut e2 = ptr::null_mut();
    assert_eq!(unsafe { kgnav_engine_open(missing.as_ptr(), &mut e2) }, KgnavStatus::Io);
    assert!(e2.is_null());

    unsafe { kgnav_engine_free(engine) };
}

#[test]
fn fuzzy_score_and_version() {
    let (a, b) = (c("gatsby"), c("gatsbe"));
    assert_eq!(unsafe { kgnav_partial_fuzzy_score(a.as_ptr(), b.as_ptr()) }, 83);
    assert_eq!(unsafe { kgnav_partial_fuzzy_score(a.as_ptr(), ptr::null()) }, -1);
    let v = unsafe { CStr::from_ptr(kgnav_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_every_export() {
    let header = include_str!("../include/kgnav.h");
    for name in [
        "kgnav_last_error",
        "kgnav_version",
        "kgnav_engine_build",
        "kgnav_engine_open",
        "kgnav_engine_save",
        "kgnav_engine_free",
        "kgnav_ask",
        "kgnav_entity_search",
        "kgnav_export_triples",
        "kgnav_partial_fuzzy_score",
        "kgnav_string_free",
        "typedef struct KgnavEngine KgnavEngine",
        "KGNAV_STATUS_PANIC = 7",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
