//! C ABI over `metaembed`.
//!
//! Every entry point returns a [`MeStatus`]. On failure a human-readable message is
//! kept per thread and can be read with [`me_last_error_message`]. Handles are opaque
//! and must be released with their matching `*_free` function. Panics never cross the
//! boundary; they surface as [`MeStatus::Panic`].

use std::cell::RefCell;
use std::collections::HashSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use metaembed::corpus::Dataset;
use metaembed::evalkit::{audit_params, rank_items};
use metaembed::numerics::DenseMatrix;
use metaembed::trainer::{entity_embeddings, load_checkpoint, score, Checkpoint};
use metaembed::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numerical = 5,
    Checkpoint = 6,
    Panic = 7,
}

/// Parameter counts of a loaded model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeParamAudit {
    pub coarse_assignment_nnz: usize,
    pub coarse_codebook: usize,
    pub fine_assignment_nnz: usize,
    pub fine_codebook_nnz: usize,
    pub total: usize,
}

/// Interaction data loaded from a directory written by `metaembed prepare`.
pub struct MeDataset {
    inner: Dataset,
}

/// A checkpoint bound to a dataset, with entity embeddings precomputed.
pub struct MeModel {
    checkpoint: Checkpoint,
    h_full: DenseMatrix,
    train_items: Vec<HashSet<usize>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => MeStatus::Io,
            Error::Parse { .. } | Error::EmptyDataset(_) | Error::Config(_) => MeStatus::Parse,
            Error::Numerical(_) | Error::NonFiniteGradient(_) | Error::NonFinite(_) | Error::Diverged { .. } => {
                MeStatus::Numerical
            }
            Error::CorruptCheckpoint(_) | Error::CheckpointVersion(_) => MeStatus::Checkpoint,
            _ => MeStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: MeStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MeStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MeStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MeStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(MeStatus::NullPointer, format!("{name} is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(MeStatus::InvalidArgument, format!("{name} is not valid UTF-8")),
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(|| fail(MeStatus::NullPointer, format!("{name} is null")), Ok)
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        return fail(MeStatus::NullPointer, format!("{name} is null"));
    }
    Ok(())
}

/// Message for the most recent failure on this thread, or null. The pointer stays
/// valid until the next `me_*` call on the same thread.
#[no_mangle]
pub extern "C" fn me_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn me_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a prepared dataset directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn me_dataset_load(dir: *const c_char, out: *mut *mut MeDataset) -> MeStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let inner = Dataset::load_dir(&path_arg(dir, "dir")?)?;
        *out = Box::into_raw(Box::new(MeDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from [`me_dataset_load`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn me_dataset_free(dataset: *mut MeDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn me_dataset_shape(dataset: *const MeDataset, num_users: *mut usize, num_items: *mut usize) -> MeStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        out_ptr(num_users, "num_users")?;
        out_ptr(num_items, "num_items")?;
        *num_users = ds.inner.set.num_users;
        *num_items = ds.inner.set.num_items;
        Ok(())
    })
}

/// Loads a checkpoint and binds it to `dataset`, which must be the one it was trained
/// on. The dataset handle may be freed afterwards.
///
/// # Safety
/// `dataset` must be a live handle, `path` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn me_model_load(dataset: *const MeDataset, path: *const c_char, out: *mut *mut MeModel) -> MeStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        out_ptr(out, "out")?;
        let checkpoint = load_checkpoint(&path_arg(path, "path")?)?;
        let set = &ds.inner.set;
        if checkpoint.num_users != set.num_users || checkpoint.num_items != set.num_items {
            return fail(
                MeStatus::InvalidArgument,
                format!(
                    "checkpoint covers {} users / {} items but the dataset has {} / {}",
                    checkpoint.num_users, checkpoint.num_items, set.num_users, set.num_items
                ),
            );
        }
        let h_full = entity_embeddings(set, &checkpoint.coarse, checkpoint.fine.as_ref(), checkpoint.config.num_layers)?;
        let train_items = set.train_items_by_user().into_iter().map(|v| v.into_iter().collect()).collect();
        *out = Box::into_raw(Box::new(MeModel {
            checkpoint,
            h_full,
            train_items,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`me_model_load`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn me_model_free(model: *mut MeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicted preference of `user` for `item`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn me_model_score(model: *const MeModel, user: usize, item: usize, out: *mut f64) -> MeStatus {
    guard(|| {
        let m = handle(model, "model")?;
        out_ptr(out, "out")?;
        *out = score(&m.h_full, m.checkpoint.num_users, user, item)?;
        Ok(())
    })
}

/// Writes up to `capacity` item indices, best first, into `items` and their count into
/// `written`. Training items of the user are skipped when `exclude_train` is non-zero.
///
/// # Safety
/// `model` must be a live handle, `items` must hold `capacity` elements (it may be null
/// when `capacity` is 0) and `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn me_model_recommend(
    model: *const MeModel,
    user: usize,
    exclude_train: i32,
    items: *mut usize,
    capacity: usize,
    written: *mut usize,
) -> MeStatus {
    guard(|| {
        let m = handle(model, "model")?;
        out_ptr(written, "written")?;
        if capacity > 0 {
            out_ptr(items, "items")?;
        }
        if user >= m.checkpoint.num_users {
            return fail(
                MeStatus::InvalidArgument,
                format!("user {user} out of range for {} users", m.checkpoint.num_users),
            );
        }
        let empty = HashSet::new();
        let exclude = if exclude_train != 0 { &m.train_items[user] } else { &empty };
        let ranked = rank_items(&m.h_full, m.checkpoint.num_users, user, exclude, capacity);
        if !ranked.is_empty() {
            std::slice::from_raw_parts_mut(items, ranked.len()).copy_from_slice(&ranked);
        }
        *written = ranked.len();
        Ok(())
    })
}

/// Stored-parameter counts of the model.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn me_model_audit(model: *const MeModel, out: *mut MeParamAudit) -> MeStatus {
    guard(|| {
        let m = handle(model, "model")?;
        out_ptr(out, "out")?;
        let a = audit_params(&m.checkpoint.coarse, m.checkpoint.fine.as_ref());
        *out = MeParamAudit {
            coarse_assignment_nnz: a.coarse_assignment_nnz,
            coarse_codebook: a.coarse_codebook,
            fine_assignment_nnz: a.fine_assignment_nnz,
            fine_codebook_nnz: a.fine_codebook_nnz,
            total: a.total,
        };
        Ok(())
    })
}
