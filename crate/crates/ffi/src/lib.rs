//! C ABI over `b2t-core`.
//!
//! Objects are opaque handles created by `*_load`/`*_new` and released by the
//! matching `*_free`. Every fallible call returns a `B2tStatus`; on failure
//! `b2t_last_error` gives a message for the calling thread. Strings returned
//! to the caller must be released with `b2t_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use b2t_core::alphabet::{marginalize_diphones, DIPHONE_CLASSES, PHONEME_CLASSES};
use b2t_core::data::load_lexicon;
use b2t_core::decode::{beam_search, BeamConfig, LexiconTrie};
use b2t_core::lm::{parse_arpa, ArpaLm};
use b2t_core::metrics::word_error_rate;
use b2t_core::nn::{load_checkpoint, TrainedModel};
use b2t_core::Error;
use ndarray::ArrayView2;

/// Result codes.
#[allow(non_camel_case_types)]
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum B2tStatus {
    B2T_OK = 0,
    B2T_ERR_NULL_POINTER = 1,
    B2T_ERR_INVALID_ARGUMENT = 2,
    B2T_ERR_IO = 3,
    B2T_ERR_PARSE = 4,
    B2T_ERR_SHAPE = 5,
    B2T_ERR_NOT_A_DISTRIBUTION = 6,
    B2T_ERR_NUMERICAL = 7,
    B2T_ERR_EMPTY_BEAM = 8,
    B2T_ERR_PANIC = 98,
    B2T_ERR_OTHER = 99,
}

use B2tStatus::*;

/// Back-off n-gram language model.
pub struct B2tLm(ArpaLm);

/// Trained decoder checkpoint.
pub struct B2tModel(TrainedModel);

/// Lexicon trie, language model and beam settings.
pub struct B2tDecoder {
    trie: LexiconTrie,
    lm: ArpaLm,
    beam: BeamConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> B2tStatus {
    match e {
        Error::Io(_) => B2T_ERR_IO,
        Error::Parse { .. } | Error::Json(_) | Error::Protocol(_) | Error::UnknownPhoneme(_) => B2T_ERR_PARSE,
        Error::Shape(_) | Error::TooShort { .. } | Error::InvalidIndex { .. } => B2T_ERR_SHAPE,
        Error::NotADistribution(_) => B2T_ERR_NOT_A_DISTRIBUTION,
        Error::Numerical(_) => B2T_ERR_NUMERICAL,
        Error::EmptyBeam => B2T_ERR_EMPTY_BEAM,
        Error::InvalidArgument(_) | Error::Config(_) | Error::EmptyLexicon | Error::InfeasibleAlignment { .. } => {
            B2T_ERR_INVALID_ARGUMENT
        }
        _ => B2T_ERR_OTHER,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (B2tStatus, String)>) -> B2tStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => B2T_OK,
        Ok(Err((s, m))) => {
            set_error(&m);
            s
        }
        Err(_) => {
            set_error("internal panic");
            B2T_ERR_PANIC
        }
    }
}

fn core<T>(r: b2t_core::Result<T>) -> Result<T, (B2tStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (B2tStatus, String) {
    (B2T_ERR_NULL_POINTER, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (B2tStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (B2T_ERR_INVALID_ARGUMENT, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread. Valid until the next call.
#[no_mangle]
pub extern "C" fn b2t_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn b2t_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn b2t_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads an ARPA file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn b2t_lm_load(path: *const c_char, out: *mut *mut B2tLm) -> B2tStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let lm = core(parse_arpa(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(B2tLm(lm)));
        Ok(())
    })
}

/// log10 probability of a sentence (with `<s>`/`</s>`).
///
/// # Safety
/// `lm` must be a live handle, `text` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn b2t_lm_sentence_logprob(lm: *const B2tLm, text: *const c_char, out: *mut f64) -> B2tStatus {
    guard(|| {
        let lm = lm.as_ref().ok_or_else(|| null("lm"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lm.0.sentence_logprob(str_arg(text, "text")?);
        Ok(())
    })
}

/// # Safety
/// `lm` must come from `b2t_lm_load` or be null.
#[no_mangle]
pub unsafe extern "C" fn b2t_lm_free(lm: *mut B2tLm) {
    if !lm.is_null() {
        drop(Box::from_raw(lm));
    }
}

/// Marginalizes one diphone log-probability frame (1601 values) into phoneme
/// log-probabilities (41 values).
///
/// # Safety
/// `frame` must hold 1601 doubles and `out` room for 41.
#[no_mangle]
pub unsafe extern "C" fn b2t_marginalize_diphones(frame: *const f64, out: *mut f64) -> B2tStatus {
    guard(|| {
        if frame.is_null() || out.is_null() {
            return Err(null("frame/out"));
        }
        let input = std::slice::from_raw_parts(frame, DIPHONE_CLASSES);
        let m = core(marginalize_diphones(input))?;
        ptr::copy_nonoverlapping(m.as_ptr(), out, PHONEME_CLASSES);
        Ok(())
    })
}

/// Pooled word error rate over `n` reference/hypothesis pairs.
///
/// # Safety
/// `refs` and `hyps` must each point to `n` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn b2t_word_error_rate(refs: *const *const c_char, hyps: *const *const c_char, n: usize, out: *mut f64) -> B2tStatus {
    guard(|| {
        if refs.is_null() || hyps.is_null() || out.is_null() {
            return Err(null("refs/hyps/out"));
        }
        let mut pairs = Vec::with_capacity(n);
        for i in 0..n {
            pairs.push((str_arg(*refs.add(i), "ref")?, str_arg(*hyps.add(i), "hyp")?));
        }
        *out = core(word_error_rate(&pairs))?;
        Ok(())
    })
}

/// Loads a decoder checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn b2t_model_load(path: *const c_char, out: *mut *mut B2tModel) -> B2tStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = core(load_checkpoint(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(B2tModel(m)));
        Ok(())
    })
}

/// Feature dimension the model expects per frame.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn b2t_model_feature_dim(model: *const B2tModel) -> usize {
    match model.as_ref() {
        Some(m) => m.0.params.config.input_dim / m.0.config.window,
        None => 0,
    }
}

/// # Safety
/// `model` must come from `b2t_model_load` or be null.
#[no_mangle]
pub unsafe extern "C" fn b2t_model_free(model: *mut B2tModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Builds a beam decoder from a lexicon file and an ARPA file.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn b2t_decoder_new(
    lexicon_path: *const c_char,
    lm_path: *const c_char,
    alpha: f64,
    beta: f64,
    beam_width: usize,
    out: *mut *mut B2tDecoder,
) -> B2tStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if beam_width == 0 || !alpha.is_finite() || !beta.is_finite() {
            return Err((B2T_ERR_INVALID_ARGUMENT, "beam_width must be >= 1, alpha/beta finite".into()));
        }
        let trie = core(load_lexicon(str_arg(lexicon_path, "lexicon_path")?).and_then(|l| LexiconTrie::new(&l)))?;
        let lm = core(parse_arpa(str_arg(lm_path, "lm_path")?))?;
        let beam = BeamConfig {
            alpha,
            beta,
            beam_width,
            nbest_k: 1,
        };
        *out = Box::into_raw(Box::new(B2tDecoder { trie, lm, beam }));
        Ok(())
    })
}

/// # Safety
/// `decoder` must come from `b2t_decoder_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn b2t_decoder_free(decoder: *mut B2tDecoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}

/// Decodes a row-major `frames x dim` feature matrix to the best transcript.
/// The returned string must be released with `b2t_string_free`.
///
/// # Safety
/// Handles must be live; `features` must hold `frames * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn b2t_decode(
    decoder: *const B2tDecoder,
    model: *const B2tModel,
    features: *const f64,
    frames: usize,
    dim: usize,
    out_text: *mut *mut c_char,
) -> B2tStatus {
    guard(|| {
        let d = decoder.as_ref().ok_or_else(|| null("decoder"))?;
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if features.is_null() || out_text.is_null() {
            return Err(null("features/out_text"));
        }
        let data = std::slice::from_raw_parts(features, frames * dim);
        let view = ArrayView2::from_shape((frames, dim), data).map_err(|e| (B2T_ERR_SHAPE, e.to_string()))?;
        let lp = core(m.0.phoneme_log_probs(view))?;
        let nbest = core(beam_search(lp.view(), &d.trie, &d.lm, &d.beam))?;
        let text = nbest.top().map(|h| h.text.clone()).unwrap_or_default();
        *out_text = CString::new(text).map_err(|e| (B2T_ERR_OTHER, e.to_string()))?.into_raw();
        Ok(())
    })
}
