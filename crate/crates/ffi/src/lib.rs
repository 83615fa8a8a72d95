//! C ABI for the pairwise-ranking OOD detection library.
//!
//! Opaque handles (`MpDataset`, `MpHead`), integer status codes mirroring
//! the CLI exit classes, and a thread-local last-error message. The
//! committed header lives at `include/molepair.h`.
//!
//! Conventions: functions returning `MpStatus` write their result through an
//! out-pointer on `MP_OK`; every handle returned must be released with the
//! matching `*_free`; strings returned by `mp_last_error` stay valid until
//! the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use molepair::data::EmbeddingSet;
use molepair::error::Error;
use molepair::head::{load_checkpoint, save_checkpoint, CheckpointMeta, ScoringHead};
use molepair::metrics::{aupr, auroc, fpr_at_95_tpr, DetectionScores};
use molepair::numerics::Matrix;
use molepair::trainer;

/// Status codes; non-zero values match the CLI exit-code classes where one
/// exists.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpStatus {
    MpOk = 0,
    MpErrUsage = 2,
    MpErrData = 3,
    MpErrNumeric = 4,
    MpErrNullPointer = 5,
    MpErrUtf8 = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> MpStatus {
    match err.exit_code() {
        2 => MpStatus::MpErrUsage,
        4 => MpStatus::MpErrNumeric,
        _ => MpStatus::MpErrData,
    }
}

fn fail(err: &Error) -> MpStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Opaque dataset handle.
pub struct MpDataset {
    set: EmbeddingSet,
}

/// Opaque trained-head handle.
pub struct MpHead {
    head: ScoringHead,
    seed: u64,
}

unsafe fn path_from(ptr_: *const c_char) -> Result<&'static Path, MpStatus> {
    if ptr_.is_null() {
        set_error("null path");
        return Err(MpStatus::MpErrNullPointer);
    }
    match CStr::from_ptr(ptr_).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(MpStatus::MpErrUtf8)
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread; empty string if none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mp_dataset_load_csv(
    path: *const c_char,
    out: *mut *mut MpDataset,
) -> MpStatus {
    dataset_load(path, out, |p| molepair::data::load_csv(p))
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mp_dataset_load_binary(
    path: *const c_char,
    out: *mut *mut MpDataset,
) -> MpStatus {
    dataset_load(path, out, |p| molepair::data::load_binary(p))
}

unsafe fn dataset_load(
    path: *const c_char,
    out: *mut *mut MpDataset,
    loader: fn(&Path) -> molepair::Result<EmbeddingSet>,
) -> MpStatus {
    if out.is_null() {
        set_error("null out pointer");
        return MpStatus::MpErrNullPointer;
    }
    let p = match path_from(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match loader(p) {
        Ok(set) => {
            *out = Box::into_raw(Box::new(MpDataset { set }));
            MpStatus::MpOk
        }
        Err(e) => fail(&e),
    }
}

/// # Safety
/// `ds` must be a live dataset handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mp_dataset_save_binary(
    ds: *const MpDataset,
    path: *const c_char,
) -> MpStatus {
    if ds.is_null() {
        set_error("null dataset handle");
        return MpStatus::MpErrNullPointer;
    }
    let p = match path_from(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match molepair::data::save_binary(&(*ds).set, p) {
        Ok(()) => MpStatus::MpOk,
        Err(e) => fail(&e),
    }
}

/// Number of records; 0 on a null handle.
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn mp_dataset_len(ds: *const MpDataset) -> usize {
    if ds.is_null() {
        return 0;
    }
    (*ds).set.len()
}

/// Embedding dimension; 0 on a null handle.
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn mp_dataset_dim(ds: *const MpDataset) -> usize {
    if ds.is_null() {
        return 0;
    }
    (*ds).set.dim()
}

/// # Safety
/// `ds` must be a handle from a load call, not yet freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mp_dataset_free(ds: *mut MpDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Train the ranking detector on the dataset. `config_json` may be null or
/// empty for defaults; otherwise it holds the same JSON accepted by the CLI
/// `train --config` file.
/// # Safety
/// `ds` must be a live dataset handle; `out` a valid pointer; `config_json`
/// null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mp_train(
    ds: *const MpDataset,
    config_json: *const c_char,
    out: *mut *mut MpHead,
) -> MpStatus {
    if ds.is_null() || out.is_null() {
        set_error("null handle");
        return MpStatus::MpErrNullPointer;
    }
    let set = &(*ds).set;
    let cfg = if config_json.is_null() {
        molepair::cli::TrainFileConfig::default().resolve(set.dim())
    } else {
        let text = match CStr::from_ptr(config_json).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("config is not valid UTF-8");
                return MpStatus::MpErrUtf8;
            }
        };
        if text.trim().is_empty() {
            molepair::cli::TrainFileConfig::default().resolve(set.dim())
        } else {
            match molepair::cli::TrainFileConfig::from_json(text) {
                Ok(f) => f.resolve(set.dim()),
                Err(e) => {
                    set_error(&format!("bad training config: {e}"));
                    return MpStatus::MpErrUsage;
                }
            }
        }
    };
    match trainer::train(set, &cfg) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(MpHead {
                head: result.head,
                seed: cfg.seed,
            }));
            MpStatus::MpOk
        }
        Err(e) => fail(&e),
    }
}

/// Score `n` row-major embeddings of width `dim`; writes `n` OOD-affinity
/// scores (higher = more OOD).
/// # Safety
/// `head` must be a live head handle; `embeddings` must point to n*dim
/// doubles; `out_scores` must point to n writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mp_head_score(
    head: *const MpHead,
    embeddings: *const f64,
    n: usize,
    dim: usize,
    out_scores: *mut f64,
) -> MpStatus {
    if head.is_null() || embeddings.is_null() || out_scores.is_null() {
        set_error("null pointer");
        return MpStatus::MpErrNullPointer;
    }
    let data = std::slice::from_raw_parts(embeddings, n * dim).to_vec();
    let batch = match Matrix::from_vec(n, dim, data) {
        Ok(m) => m,
        Err(e) => return fail(&e),
    };
    match (*head).head.score(&batch) {
        Ok(scores) => {
            ptr::copy_nonoverlapping(scores.as_ptr(), out_scores, n);
            MpStatus::MpOk
        }
        Err(e) => fail(&e),
    }
}

/// # Safety
/// `head` must be a live head handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mp_head_save(head: *const MpHead, path: *const c_char) -> MpStatus {
    if head.is_null() {
        set_error("null head handle");
        return MpStatus::MpErrNullPointer;
    }
    let p = match path_from(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let meta = CheckpointMeta {
        epoch: 0,
        lr: 0.0,
        seed: (*head).seed,
    };
    match save_checkpoint((*head).head.mlp(), &meta, p) {
        Ok(()) => MpStatus::MpOk,
        Err(e) => fail(&e),
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mp_head_load(path: *const c_char, out: *mut *mut MpHead) -> MpStatus {
    if out.is_null() {
        set_error("null out pointer");
        return MpStatus::MpErrNullPointer;
    }
    let p = match path_from(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_checkpoint(p).and_then(|(mlp, meta)| Ok((ScoringHead::from_mlp(mlp)?, meta))) {
        Ok((head, meta)) => {
            *out = Box::into_raw(Box::new(MpHead {
                head,
                seed: meta.seed,
            }));
            MpStatus::MpOk
        }
        Err(e) => fail(&e),
    }
}

/// # Safety
/// `head` must be a handle from train/load, not yet freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mp_head_free(head: *mut MpHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

unsafe fn metric_on_slices(
    id_scores: *const f64,
    m: usize,
    ood_scores: *const f64,
    k: usize,
    out: *mut f64,
    f: fn(&DetectionScores) -> f64,
) -> MpStatus {
    if id_scores.is_null() || ood_scores.is_null() || out.is_null() {
        set_error("null pointer");
        return MpStatus::MpErrNullPointer;
    }
    let id = std::slice::from_raw_parts(id_scores, m).to_vec();
    let ood = std::slice::from_raw_parts(ood_scores, k).to_vec();
    match DetectionScores::new(id, ood, "ffi") {
        Ok(s) => {
            *out = f(&s);
            MpStatus::MpOk
        }
        Err(e) => fail(&e),
    }
}

/// AUROC of raw score arrays (higher score = more OOD).
/// # Safety
/// `id_scores`/`ood_scores` must point to m/k doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mp_auroc(
    id_scores: *const f64,
    m: usize,
    ood_scores: *const f64,
    k: usize,
    out: *mut f64,
) -> MpStatus {
    metric_on_slices(id_scores, m, ood_scores, k, out, auroc)
}

/// AUPR with OOD as the positive class.
/// # Safety
/// `id_scores`/`ood_scores` must point to m/k doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mp_aupr(
    id_scores: *const f64,
    m: usize,
    ood_scores: *const f64,
    k: usize,
    out: *mut f64,
) -> MpStatus {
    metric_on_slices(id_scores, m, ood_scores, k, out, aupr)
}

/// FPR at 95% ID true-positive rate.
/// # Safety
/// `id_scores`/`ood_scores` must point to m/k doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mp_fpr95(
    id_scores: *const f64,
    m: usize,
    ood_scores: *const f64,
    k: usize,
    out: *mut f64,
) -> MpStatus {
    metric_on_slices(id_scores, m, ood_scores, k, out, fpr_at_95_tpr)
}
