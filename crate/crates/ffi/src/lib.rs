//! C interface to concept spaces and projection encoders.
//!
//! Every function returns a [`CsStatus`]. On failure the message is kept per
//! thread and can be read with [`cs_last_error_message`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use concept_space::error::Error;
use concept_space::multimodal::itm_score;
use concept_space::projection::{FeatureEncoder, Payload};
use concept_space::store::ConceptId;
use concept_space::ConceptSpace;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Format = 4,
    Version = 5,
    Config = 6,
    UnknownConcept = 7,
    OutOfRange = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
    Internal = 12,
}

/// A loaded concept space.
pub struct CsSpace {
    inner: ConceptSpace,
}

/// A loaded projection encoder.
pub struct CsEncoder {
    inner: FeatureEncoder,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CsStatus {
    match e {
        Error::Domain(_) => CsStatus::Domain,
        Error::Format { .. } => CsStatus::Format,
        Error::Version { .. } => CsStatus::Version,
        Error::Config(_) | Error::Validation(_) => CsStatus::Config,
        Error::UnknownConcept(_) | Error::UnsupportedConditioning(_) => CsStatus::UnknownConcept,
        Error::Io { .. } => CsStatus::Io,
        _ => CsStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CsStatus, String)>) -> CsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside concept-space".into());
            CsStatus::Panic
        }
    }
}

fn lib(e: Error) -> (CsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CsStatus, String) {
    (CsStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CsStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Load a concept space file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_space_load(path: *const c_char, out: *mut *mut CsSpace) -> CsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let space = ConceptSpace::load(Path::new(path)).map_err(lib)?;
        *out = Box::into_raw(Box::new(CsSpace { inner: space }));
        Ok(())
    })
}

/// # Safety
/// `space` must come from [`cs_space_load`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn cs_space_free(space: *mut CsSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Number of concepts; 0 for NULL.
///
/// # Safety
/// `space` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_space_num_concepts(space: *const CsSpace) -> usize {
    space.as_ref().map_or(0, |s| s.inner.vocabulary.len())
}

/// Box dimension; 0 for NULL.
///
/// # Safety
/// `space` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_space_dim(space: *const CsSpace) -> usize {
    space.as_ref().map_or(0, |s| s.inner.dim())
}

/// Index of the concept called `name`.
///
/// # Safety
/// Pointers must be valid; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cs_space_concept_index(space: *const CsSpace, name: *const c_char, out: *mut u32) -> CsStatus {
    guard(|| {
        let s = ref_arg(space, "space")?;
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.inner.vocabulary.require(name).map_err(lib)?.0;
        Ok(())
    })
}

/// `P(concept | given)` by concept name.
///
/// # Safety
/// Pointers must be valid; names NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cs_space_entailment(
    space: *const CsSpace,
    concept: *const c_char,
    given: *const c_char,
    out: *mut f64,
) -> CsStatus {
    guard(|| {
        let s = ref_arg(space, "space")?;
        let a = s.inner.vocabulary.require(str_arg(concept, "concept")?).map_err(lib)?;
        let b = s.inner.vocabulary.require(str_arg(given, "given")?).map_err(lib)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.inner.entailment(a, b);
        Ok(())
    })
}

/// `P(concept | given)` by concept index.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_space_entailment_index(
    space: *const CsSpace,
    concept: u32,
    given: u32,
    out: *mut f64,
) -> CsStatus {
    guard(|| {
        let s = ref_arg(space, "space")?;
        let n = s.inner.vocabulary.len();
        if concept as usize >= n || given as usize >= n {
            return Err((CsStatus::OutOfRange, format!("concept index out of range (have {n})")));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.inner.entailment(ConceptId(concept), ConceptId(given));
        Ok(())
    })
}

/// Load an encoder file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_encoder_load(path: *const c_char, out: *mut *mut CsEncoder) -> CsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let enc = FeatureEncoder::load(Path::new(path)).map_err(lib)?;
        *out = Box::into_raw(Box::new(CsEncoder { inner: enc }));
        Ok(())
    })
}

/// # Safety
/// `encoder` must come from [`cs_encoder_load`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn cs_encoder_free(encoder: *mut CsEncoder) {
    if !encoder.is_null() {
        drop(Box::from_raw(encoder));
    }
}

/// Output box dimension; 0 for NULL.
///
/// # Safety
/// `encoder` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_encoder_dim(encoder: *const CsEncoder) -> usize {
    encoder.as_ref().map_or(0, |e| e.inner.dim())
}

unsafe fn write_box(
    b: &concept_space::BoxEmbedding,
    out_min: *mut f64,
    out_delta: *mut f64,
    len: usize,
) -> Result<(), (CsStatus, String)> {
    if out_min.is_null() || out_delta.is_null() {
        return Err(null("output buffer"));
    }
    if len < b.dim() {
        return Err((
            CsStatus::BufferTooSmall,
            format!("buffers hold {len} values, box has {}", b.dim()),
        ));
    }
    std::slice::from_raw_parts_mut(out_min, b.dim()).copy_from_slice(&b.min);
    std::slice::from_raw_parts_mut(out_delta, b.dim()).copy_from_slice(&b.delta);
    Ok(())
}

/// Project a feature vector; writes `dim` values to each output buffer.
///
/// # Safety
/// `features` must point to `n_features` doubles and each output buffer to
/// `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cs_encode_vision(
    encoder: *const CsEncoder,
    features: *const f64,
    n_features: usize,
    out_min: *mut f64,
    out_delta: *mut f64,
    out_len: usize,
) -> CsStatus {
    guard(|| {
        let e = ref_arg(encoder, "encoder")?;
        if features.is_null() {
            return Err(null("features"));
        }
        let x = std::slice::from_raw_parts(features, n_features);
        let b = e.inner.encode(Payload::Vision(x)).map_err(lib)?;
        write_box(&b, out_min, out_delta, out_len)
    })
}

/// Project a sentence; writes `dim` values to each output buffer.
///
/// # Safety
/// `text` must be NUL-terminated and each output buffer hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cs_encode_text(
    encoder: *const CsEncoder,
    text: *const c_char,
    out_min: *mut f64,
    out_delta: *mut f64,
    out_len: usize,
) -> CsStatus {
    guard(|| {
        let e = ref_arg(encoder, "encoder")?;
        let t = str_arg(text, "text")?;
        let b = e.inner.encode(Payload::Text(t)).map_err(lib)?;
        write_box(&b, out_min, out_delta, out_len)
    })
}

/// Image-text matching score of a feature vector and a sentence.
///
/// # Safety
/// Handles must be live, `features` must point to `n_features` doubles and
/// `text` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cs_itm_score(
    space: *const CsSpace,
    vision: *const CsEncoder,
    text_encoder: *const CsEncoder,
    features: *const f64,
    n_features: usize,
    text: *const c_char,
    out: *mut f64,
) -> CsStatus {
    guard(|| {
        let s = ref_arg(space, "space")?;
        let v = ref_arg(vision, "vision")?;
        let t = ref_arg(text_encoder, "text_encoder")?;
        if features.is_null() {
            return Err(null("features"));
        }
        let x = std::slice::from_raw_parts(features, n_features);
        let sentence = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = itm_score(
            Payload::Vision(x),
            Payload::Text(sentence),
            &v.inner,
            &t.inner,
            &s.inner,
        )
        .map_err(lib)?;
        Ok(())
    })
}
