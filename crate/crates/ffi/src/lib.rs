//! C ABI over the `dualspace` library.
//!
//! Embeddings are exposed as an opaque `DsEmbedding` handle. Every fallible
//! call returns a [`DsStatus`]; on failure a message for the calling thread
//! is available from [`ds_last_error_message`]. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dualspace::cli::{load_dataset, score, EvalOptions};
use dualspace::{CompareMethod, DualEmbedding, Error, Task};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    OutOfVocabulary = 5,
    InvalidArgument = 6,
    UndefinedCosine = 7,
    NotEnoughData = 8,
    BufferTooSmall = 9,
    Panic = 10,
    Internal = 11,
}

/// Which spaces the cue and the candidates are read from.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsCompareMethod {
    Ww = 0,
    Wc = 1,
    Cw = 2,
    Cc = 3,
    Ss = 4,
    Aa = 5,
}

/// Compare methods travel as plain integers so that an out-of-range value
/// from C is an error rather than undefined behavior.
fn compare_method(cm: u32) -> Result<CompareMethod, Failure> {
    CompareMethod::ALL
        .get(cm as usize)
        .copied()
        .ok_or_else(|| fail(DsStatus::InvalidArgument, &format!("unknown compare method {cm}")))
}

/// Opaque embedding handle.
pub struct DsEmbedding {
    inner: DualEmbedding,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(DsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => DsStatus::Io,
            Error::Parse { .. } | Error::Format { .. } => DsStatus::Format,
            Error::OutOfVocabulary(_) => DsStatus::OutOfVocabulary,
            Error::UndefinedCosine => DsStatus::UndefinedCosine,
            Error::NotEnoughData(_) | Error::EmptyVocabulary | Error::ZeroVariance => DsStatus::NotEnoughData,
            Error::InvalidConfig(_) | Error::DimensionMismatch { .. } => DsStatus::InvalidArgument,
            Error::NonFinite(_) => DsStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: DsStatus, msg: &str) -> Failure {
    Failure(status, msg.to_owned())
}

/// Runs `body`, records any failure for the calling thread and converts
/// panics into `DsStatus::Panic`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside dualspace");
            DsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(DsStatus::NullPointer, &format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DsStatus::InvalidUtf8, &format!("`{name}` is not valid UTF-8")))
}

unsafe fn handle<'a>(emb: *const DsEmbedding) -> Result<&'a DualEmbedding, Failure> {
    emb.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| fail(DsStatus::NullPointer, "embedding handle is null"))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(DsStatus::NullPointer, &format!("`{name}` is null")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads an embedding file. On success `*out` owns a handle that must be
/// released with [`ds_embedding_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_embedding_load(path: *const c_char, out: *mut *mut DsEmbedding) -> DsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = DualEmbedding::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(DsEmbedding { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `emb` must come from [`ds_embedding_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ds_embedding_free(emb: *mut DsEmbedding) {
    if !emb.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(emb))));
    }
}

/// Number of vocabulary entries, 0 for a null handle.
///
/// # Safety
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_embedding_vocab_size(emb: *const DsEmbedding) -> usize {
    emb.as_ref().map_or(0, |h| h.inner.vocab().len())
}

/// Vector dimension, 0 for a null handle.
///
/// # Safety
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_embedding_dim(emb: *const DsEmbedding) -> usize {
    emb.as_ref().map_or(0, |h| h.inner.dim())
}

/// Looks up the id of `token`.
///
/// # Safety
/// Pointers must be valid; `token` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_embedding_token_id(emb: *const DsEmbedding, token: *const c_char, out_id: *mut u32) -> DsStatus {
    guard(|| {
        let emb = handle(emb)?;
        let out = out_arg(out_id, "out_id")?;
        *out = emb.id(str_arg(token, "token")?)?;
        Ok(())
    })
}

/// Copies token `id` into `buf` as a NUL-terminated string. `*out_len`
/// receives the token length in bytes without the terminator, also when the
/// buffer is too small.
///
/// # Safety
/// `buf` must hold `buf_len` bytes (it may be null when `buf_len` is 0).
#[no_mangle]
pub unsafe extern "C" fn ds_embedding_token(
    emb: *const DsEmbedding,
    id: u32,
    buf: *mut c_char,
    buf_len: usize,
    out_len: *mut usize,
) -> DsStatus {
    guard(|| {
        let emb = handle(emb)?;
        let out_len = out_arg(out_len, "out_len")?;
        if id as usize >= emb.vocab().len() {
            return Err(fail(DsStatus::InvalidArgument, &format!("id {id} outside vocabulary")));
        }
        let token = emb.vocab().token(id).as_bytes();
        *out_len = token.len();
        if buf.is_null() || buf_len < token.len() + 1 {
            return Err(fail(DsStatus::BufferTooSmall, "buffer too small for token"));
        }
        ptr::copy_nonoverlapping(token.as_ptr(), buf.cast::<u8>(), token.len());
        *buf.add(token.len()) = 0;
        Ok(())
    })
}

/// `cm` takes a [`DsCompareMethod`] value in this and every other call.
///
/// Cosine of `a` read from the cue space and `b` from the candidate space.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_similarity(
    emb: *const DsEmbedding,
    cm: u32,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let emb = handle(emb)?;
        let out = out_arg(out, "out")?;
        *out = emb.similarity(compare_method(cm)?, str_arg(a, "a")?, str_arg(b, "b")?)?;
        Ok(())
    })
}

/// Top-`n` neighbors of `cue` (the cue itself excluded), best first. Writes
/// up to `n` ids and scores and their count to `*out_count`.
///
/// # Safety
/// `out_ids` and `out_scores` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn ds_nearest(
    emb: *const DsEmbedding,
    cm: u32,
    cue: *const c_char,
    n: usize,
    out_ids: *mut u32,
    out_scores: *mut f64,
    out_count: *mut usize,
) -> DsStatus {
    guard(|| {
        let emb = handle(emb)?;
        let count = out_arg(out_count, "out_count")?;
        *count = 0;
        if n > 0 && (out_ids.is_null() || out_scores.is_null()) {
            return Err(fail(DsStatus::NullPointer, "output arrays are null"));
        }
        let found = emb.nearest(compare_method(cm)?, str_arg(cue, "cue")?, n, &[])?;
        for (k, nb) in found.iter().enumerate() {
            *out_ids.add(k) = nb.id;
            *out_scores.add(k) = nb.score;
        }
        *count = found.len();
        Ok(())
    })
}

unsafe fn eval_file(
    emb: *const DsEmbedding,
    cm: u32,
    task: Task,
    path: *const c_char,
    top_n: usize,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let emb = handle(emb)?;
        let out = out_arg(out, "out_value")?;
        let path = str_arg(path, "dataset_path")?;
        let mut opts = EvalOptions::default();
        if top_n > 0 {
            opts.association_n = top_n;
            opts.analogy.top_n = top_n;
        }
        let data = load_dataset(task, Path::new(path), &opts)?;
        *out = score(emb, compare_method(cm)?, &data, &opts)?.value;
        Ok(())
    })
}

/// Pearson correlation against a canonical similarity TSV.
///
/// # Safety
/// Pointers must be valid; `dataset_path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_eval_similarity(emb: *const DsEmbedding, cm: u32, dataset_path: *const c_char, out_value: *mut f64) -> DsStatus {
    eval_file(emb, cm, Task::Similarity, dataset_path, 0, out_value)
}

/// Mean of hit ratio and coverage on a canonical association TSV. `n` is
/// the neighbor list length; 0 selects the default of 10.
///
/// # Safety
/// Pointers must be valid; `dataset_path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_eval_association(
    emb: *const DsEmbedding,
    cm: u32,
    dataset_path: *const c_char,
    n: usize,
    out_value: *mut f64,
) -> DsStatus {
    eval_file(emb, cm, Task::Association, dataset_path, n, out_value)
}

/// Fraction of analogy questions answered within the top `top_n`
/// candidates; 0 selects the default of 3. Accepts canonical TSV or the
/// Google format.
///
/// # Safety
/// Pointers must be valid; `dataset_path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_eval_analogy(
    emb: *const DsEmbedding,
    cm: u32,
    dataset_path: *const c_char,
    top_n: usize,
    out_value: *mut f64,
) -> DsStatus {
    eval_file(emb, cm, Task::Analogy, dataset_path, top_n, out_value)
}
