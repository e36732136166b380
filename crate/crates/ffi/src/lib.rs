//! C ABI for the kgnav retrieval engine.
//!
//! Engines are opaque heap handles. Every fallible call returns a
//! [`KgnavStatus`]; on failure the message is available from
//! [`kgnav_last_error`] on the same thread until the next failing call.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with [`kgnav_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kgnav::controllers::{run_controller, ControllerConfig, ControllerKind};
use kgnav::corpus::load_corpus;
use kgnav::entity::{entity_search, load_annotations};
use kgnav::fuzzy::partial_fuzzy_score;
use kgnav::gateway::{Gateway, ScriptedGateway};
use kgnav::{BuildOptions, Clock, EmbedderSpec, Engine, Error};

/// Result codes shared by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgnavStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Usage = 3,
    Validation = 4,
    Io = 5,
    Runtime = 6,
    Panic = 7,
}

/// Opaque engine handle: mention graph, vector index and embedder.
pub struct KgnavEngine {
    engine: Engine,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> KgnavStatus {
    match e {
        Error::Usage(_) => KgnavStatus::Usage,
        Error::Io { .. } => KgnavStatus::Io,
        Error::Parse { .. } | Error::Validation(_) | Error::NotFound(_) | Error::Dimension { .. } | Error::Json(_) => {
            KgnavStatus::Validation
        }
        Error::Gateway(_) | Error::Embedder(_) => KgnavStatus::Runtime,
    }
}

struct Failure(KgnavStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KgnavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KgnavStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside kgnav");
            KgnavStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(KgnavStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(KgnavStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

fn engine_ref<'a>(p: *const KgnavEngine) -> Result<&'a KgnavEngine, Failure> {
    // SAFETY: handles only come from kgnav_engine_build/open.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(KgnavStatus::NullArgument, "engine is null".into()))
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(KgnavStatus::Runtime, "output contains NUL".into()))?;
    // SAFETY: caller checked `out` for null.
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(KgnavStatus::NullArgument, "output pointer is null".into()))
    } else {
        // SAFETY: non-null, caller-provided slot.
        unsafe { *out = ptr::null_mut() };
        Ok(())
    }
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kgnav_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn kgnav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build an engine from a corpus JSONL file with default chunking, the
/// builtin extractor and the reference embedder. `annotations_path` may be null.
///
/// # Safety
/// String arguments must be null or valid NUL-terminated strings; `out` must
/// point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn kgnav_engine_build(
    corpus_path: *const c_char,
    annotations_path: *const c_char,
    out: *mut *mut KgnavEngine,
) -> KgnavStatus {
    guard(|| {
        check_out(out)?;
        let corpus = str_arg(corpus_path, "corpus_path")?;
        let annotations = opt_str_arg(annotations_path, "annotations_path")?;
        let docs = load_corpus(corpus)?;
        let opts = BuildOptions {
            annotations: match annotations {
                Some(p) => load_annotations(p, &docs)?,
                None => Vec::new(),
            },
            ..BuildOptions::default()
        };
        let engine = Engine::build(&docs, &opts, EmbedderSpec::default())?;
        *out = Box::into_raw(Box::new(KgnavEngine { engine }));
        Ok(())
    })
}

/// Load an engine from a snapshot written by `kgnav build` or [`kgnav_engine_save`].
///
/// # Safety
/// As for [`kgnav_engine_build`].
#[no_mangle]
pub unsafe extern "C" fn kgnav_engine_open(snapshot_path: *const c_char, out: *mut *mut KgnavEngine) -> KgnavStatus {
    guard(|| {
        check_out(out)?;
        let path = str_arg(snapshot_path, "snapshot_path")?;
        let engine = Engine::load(path)?;
        *out = Box::into_raw(Box::new(KgnavEngine { engine }));
        Ok(())
    })
}

/// # Safety
/// `engine` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kgnav_engine_save(engine: *const KgnavEngine, path: *const c_char) -> KgnavStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        let path = str_arg(path, "path")?;
        e.engine.save(path)?;
        Ok(())
    })
}

/// Release an engine. Null is ignored.
///
/// # Safety
/// `engine` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgnav_engine_free(engine: *mut KgnavEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Run one controller and return `{"evidence": ..., "trace": "<jsonl>"}`.
///
/// `controller` is `vector`, `graphrag-local`, `heuristic` or `llm`.
/// `config_json` may be null or a JSON object overriding controller settings.
/// `script_path` may be null; the `llm` controller requires it. With
/// `frozen_clock` set, timings are recorded as zero.
///
/// # Safety
/// `engine` must be a live handle; strings null or NUL-terminated; `out_json`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn kgnav_ask(
    engine: *const KgnavEngine,
    question: *const c_char,
    controller: *const c_char,
    config_json: *const c_char,
    script_path: *const c_char,
    frozen_clock: bool,
    out_json: *mut *mut c_char,
) -> KgnavStatus {
    guard(|| {
        check_out(out_json)?;
        let e = engine_ref(engine)?;
        let question = str_arg(question, "question")?;
        let kind: ControllerKind = str_arg(controller, "controller")?.parse()?;
        let cfg: ControllerConfig = match opt_str_arg(config_json, "config_json")? {
            Some(raw) => serde_json::from_str(raw).map_err(Error::from)?,
            None => ControllerConfig::default(),
        };
        cfg.validate()?;
        let gateway = opt_str_arg(script_path, "script_path")?
            .map(|p| ScriptedGateway::load(Path::new(p)))
            .transpose()?;
        let clock = if frozen_clock { Clock::Frozen } else { Clock::Wall };
        let ctx = e
            .engine
            .context(gateway.as_ref().map(|g| g as &dyn Gateway), cfg.n_seed, clock);
        let run = run_controller(kind, None, question, ctx, &cfg)?;
        let v = serde_json::json!({ "evidence": run.evidence, "trace": run.trace.to_jsonl() });
        out_string(out_json, v.to_string())
    })
}

/// Seed entities for a question as a JSON array of
/// `{entity_uri, label, chunk_count}`.
///
/// # Safety
/// As for [`kgnav_ask`].
#[no_mangle]
pub unsafe extern "C" fn kgnav_entity_search(
    engine: *const KgnavEngine,
    question: *const c_char,
    n_seed: usize,
    out_json: *mut *mut c_char,
) -> KgnavStatus {
    guard(|| {
        check_out(out_json)?;
        let e = engine_ref(engine)?;
        let question = str_arg(question, "question")?;
        let seeds = entity_search(question, e.engine.graph(), n_seed);
        out_string(out_json, serde_json::to_string(&seeds).map_err(Error::from)?)
    })
}

/// Write the graph as line-oriented triples.
///
/// # Safety
/// `engine` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kgnav_export_triples(engine: *const KgnavEngine, path: *const c_char) -> KgnavStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        let path = str_arg(path, "path")?;
        e.engine.graph().export_triples(path)?;
        Ok(())
    })
}

/// Windowed Levenshtein partial score in `[0, 100]`, or -1 on a null or
/// non-UTF-8 argument.
///
/// # Safety
/// Arguments must be null or valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn kgnav_partial_fuzzy_score(a: *const c_char, b: *const c_char) -> i32 {
    let mut score = -1;
    let status = guard(|| {
        let a = str_arg(a, "a")?;
        let b = str_arg(b, "b")?;
        score = i32::from(partial_fuzzy_score(a, b));
        Ok(())
    });
    if status == KgnavStatus::Ok {
        score
    } else {
        -1
    }
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgnav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
