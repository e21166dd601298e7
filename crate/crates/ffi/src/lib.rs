//! C ABI over the LC-prototype store, classification and manifest loading.
//!
//! Every function returns an [`LcpnStatus`]. On failure a message is kept
//! per thread and can be read with [`lcpn_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function. Panics never
//! cross the boundary; they surface as `LCPN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lc_protonets::dataset::Dataset;
use lc_protonets::error::Error;
use lc_protonets::label_space::{LabelSet, DEFAULT_POWER_SET_CAP};
use lc_protonets::prototypes::{build_store_with_cap, classify, cosine_distance, dedup_store, EmbeddedItem, LCPrototypeStore};

/// Tie tolerance used by the library's own classifiers.
pub const LCPN_DEFAULT_TIE_EPSILON: f64 = 1e-9;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcpnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    ZeroNorm = 4,
    NonFinite = 5,
    CardinalityAboveCap = 6,
    Io = 7,
    Parse = 8,
    BufferTooSmall = 9,
    OutOfRange = 10,
    Panic = 11,
}

/// Prototype store handle.
pub struct LcpnStore {
    inner: LCPrototypeStore,
}

/// Loaded manifest handle.
pub struct LcpnDataset {
    inner: Dataset,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(LcpnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimensionMismatch { .. } => LcpnStatus::DimensionMismatch,
            Error::ZeroNorm(_) => LcpnStatus::ZeroNorm,
            Error::NonFinite(_) => LcpnStatus::NonFinite,
            Error::CardinalityAboveCap { .. } => LcpnStatus::CardinalityAboveCap,
            Error::Io { .. } => LcpnStatus::Io,
            Error::Parse { .. } => LcpnStatus::Parse,
            Error::LabelOutOfRange { .. } => LcpnStatus::OutOfRange,
            _ => LcpnStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: LcpnStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LcpnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LcpnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            LcpnStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(LcpnStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(LcpnStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return fail(LcpnStatus::NullPointer, format!("{what} is null"));
    }
    out.write(value);
    Ok(())
}

/// Copies `labels` into `buf`, always reporting the needed length.
unsafe fn write_labels(labels: &LabelSet, buf: *mut usize, cap: usize, len_out: *mut usize) -> Result<(), Failure> {
    let v = labels.to_vec();
    write(len_out, v.len(), "len_out")?;
    if v.len() > cap {
        return fail(LcpnStatus::BufferTooSmall, format!("need room for {} labels, got {cap}", v.len()));
    }
    if !v.is_empty() {
        if buf.is_null() {
            return fail(LcpnStatus::NullPointer, "labels_out is null");
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
    }
    Ok(())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lcpn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lcpn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Cosine distance `1 - cos(u, v)`, clamped to `[0, 2]`.
///
/// # Safety
/// `u` and `v` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcpn_cosine_distance(u: *const f64, v: *const f64, dim: usize, out: *mut f64) -> LcpnStatus {
    guard(|| {
        let u = slice(u, dim, "u")?;
        let v = slice(v, dim, "v")?;
        write(out, cosine_distance(u, v)?, "out")
    })
}

/// Builds a store from `n_items` row-major embeddings of width `dim`.
/// Item `i` carries labels `labels[label_offsets[i]..label_offsets[i + 1]]`.
///
/// # Safety
/// `embeddings` must hold `n_items * dim` doubles, `label_offsets`
/// `n_items + 1` entries and `labels` `label_offsets[n_items]` entries.
#[no_mangle]
pub unsafe extern "C" fn lcpn_store_build(
    embeddings: *const f64,
    n_items: usize,
    dim: usize,
    label_offsets: *const usize,
    labels: *const usize,
    out: *mut *mut LcpnStore,
) -> LcpnStatus {
    guard(|| {
        if out.is_null() {
            return fail(LcpnStatus::NullPointer, "out is null");
        }
        if dim == 0 {
            return fail(LcpnStatus::InvalidArgument, "dim must be positive");
        }
        let total = n_items
            .checked_mul(dim)
            .ok_or_else(|| Failure(LcpnStatus::InvalidArgument, "n_items * dim overflows".into()))?;
        let emb = slice(embeddings, total, "embeddings")?;
        let offsets = slice(label_offsets, n_items + 1, "label_offsets")?;
        if offsets.first().is_some_and(|&o| o != 0) || offsets.windows(2).any(|w| w[0] > w[1]) {
            return fail(LcpnStatus::InvalidArgument, "label_offsets must start at 0 and be non-decreasing");
        }
        let all_labels = slice(labels, offsets[n_items], "labels")?;
        let items: Vec<EmbeddedItem> = (0..n_items)
            .map(|i| {
                let ls = LabelSet::from_indices(all_labels[offsets[i]..offsets[i + 1]].iter().copied());
                EmbeddedItem::new(format!("#{i}"), ls, emb[i * dim..(i + 1) * dim].to_vec())
            })
            .collect();
        let store = build_store_with_cap(&items, DEFAULT_POWER_SET_CAP)?;
        *out = Box::into_raw(Box::new(LcpnStore { inner: store }));
        Ok(())
    })
}

/// Releases a store; NULL is ignored.
///
/// # Safety
/// `store` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lcpn_store_free(store: *mut LcpnStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcpn_store_len(store: *const LcpnStore, out: *mut usize) -> LcpnStatus {
    guard(|| write(out, handle(store, "store")?.inner.len(), "out"))
}

/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcpn_store_dim(store: *const LcpnStore, out: *mut usize) -> LcpnStatus {
    guard(|| write(out, handle(store, "store")?.inner.dim(), "out"))
}

/// Labels of class `j` in canonical order. `len_out` always receives the
/// class size, also when `LCPN_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `labels_out` must have room for `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn lcpn_store_class(
    store: *const LcpnStore,
    j: usize,
    labels_out: *mut usize,
    cap: usize,
    len_out: *mut usize,
) -> LcpnStatus {
    guard(|| {
        let store = &handle(store, "store")?.inner;
        let class = store
            .classes()
            .get(j)
            .ok_or_else(|| Failure(LcpnStatus::OutOfRange, format!("class {j} of {}", store.len())))?;
        write_labels(class, labels_out, cap, len_out)
    })
}

/// New store with identical-membership prototypes merged. Predictions are
/// unchanged.
///
/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcpn_store_dedup(store: *const LcpnStore, out: *mut *mut LcpnStore) -> LcpnStatus {
    guard(|| {
        let store = handle(store, "store")?;
        if out.is_null() {
            return fail(LcpnStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(LcpnStore { inner: dedup_store(&store.inner) }));
        Ok(())
    })
}

/// Predicted label set of the nearest prototype.
///
/// # Safety
/// `query` must hold `dim` doubles and `labels_out` room for `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn lcpn_classify(
    store: *const LcpnStore,
    query: *const f64,
    dim: usize,
    tie_epsilon: f64,
    labels_out: *mut usize,
    cap: usize,
    len_out: *mut usize,
) -> LcpnStatus {
    guard(|| {
        let store = &handle(store, "store")?.inner;
        if !(tie_epsilon.is_finite() && tie_epsilon >= 0.0) {
            return fail(LcpnStatus::InvalidArgument, "tie_epsilon must be finite and non-negative");
        }
        let q = slice(query, dim, "query")?;
        let labels = classify(q, store, tie_epsilon)?;
        write_labels(&labels, labels_out, cap, len_out)
    })
}

/// Loads and validates an embedding manifest.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn lcpn_dataset_load(path: *const c_char, out: *mut *mut LcpnDataset) -> LcpnStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(LcpnStatus::NullPointer, "path or out is null");
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(LcpnStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let inner = lc_protonets::cli_io::load_manifest(path)?;
        let names = inner
            .vocabulary()
            .names()
            .iter()
            .map(|n| CString::new(n.as_str()).map_err(|_| Failure(LcpnStatus::Parse, format!("label {n:?} contains NUL"))))
            .collect::<Result<_, _>>()?;
        *out = Box::into_raw(Box::new(LcpnDataset { inner, names }));
        Ok(())
    })
}

/// Releases a dataset; NULL is ignored.
///
/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lcpn_dataset_free(dataset: *mut LcpnDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcpn_dataset_len(dataset: *const LcpnDataset, out: *mut usize) -> LcpnStatus {
    guard(|| write(out, handle(dataset, "dataset")?.inner.len(), "out"))
}

/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcpn_dataset_dim(dataset: *const LcpnDataset, out: *mut usize) -> LcpnStatus {
    guard(|| write(out, handle(dataset, "dataset")?.inner.dim(), "out"))
}

/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcpn_dataset_label_count(dataset: *const LcpnDataset, out: *mut usize) -> LcpnStatus {
    guard(|| write(out, handle(dataset, "dataset")?.names.len(), "out"))
}

/// Name of label `index`, owned by the dataset; NULL when out of range.
///
/// # Safety
/// `dataset` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lcpn_dataset_label_name(dataset: *const LcpnDataset, index: usize) -> *const c_char {
    match dataset.as_ref().and_then(|d| d.names.get(index)) {
        Some(n) => n.as_ptr(),
        None => ptr::null(),
    }
}

/// # Safety
/// `labels_out` must have room for `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn lcpn_dataset_item_labels(
    dataset: *const LcpnDataset,
    item: usize,
    labels_out: *mut usize,
    cap: usize,
    len_out: *mut usize,
) -> LcpnStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.inner;
        let it = ds
            .items()
            .get(item)
            .ok_or_else(|| Failure(LcpnStatus::OutOfRange, format!("item {item} of {}", ds.len())))?;
        write_labels(&it.labels, labels_out, cap, len_out)
    })
}

/// Copies the embedding of `item` into `out`, which must hold `cap >= dim`
/// doubles.
///
/// # Safety
/// `out` must have room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn lcpn_dataset_item_embedding(
    dataset: *const LcpnDataset,
    item: usize,
    out: *mut f64,
    cap: usize,
) -> LcpnStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.inner;
        let it = ds
            .items()
            .get(item)
            .ok_or_else(|| Failure(LcpnStatus::OutOfRange, format!("item {item} of {}", ds.len())))?;
        if cap < it.embedding.len() {
            return fail(LcpnStatus::BufferTooSmall, format!("need {} doubles, got {cap}", it.embedding.len()));
        }
        if out.is_null() {
            return fail(LcpnStatus::NullPointer, "out is null");
        }
        ptr::copy_nonoverlapping(it.embedding.as_ptr(), out, it.embedding.len());
        Ok(())
    })
}

/// Builds a store from the listed dataset items.
///
/// # Safety
/// `items` must hold `n` indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcpn_dataset_build_store(
    dataset: *const LcpnDataset,
    items: *const usize,
    n: usize,
    out: *mut *mut LcpnStore,
) -> LcpnStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.inner;
        if out.is_null() {
            return fail(LcpnStatus::NullPointer, "out is null");
        }
        let picks = slice(items, n, "items")?;
        let support = picks
            .iter()
            .map(|&i| {
                ds.items()
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Failure(LcpnStatus::OutOfRange, format!("item {i} of {}", ds.len())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let store = build_store_with_cap(&support, DEFAULT_POWER_SET_CAP)?;
        *out = Box::into_raw(Box::new(LcpnStore { inner: store }));
        Ok(())
    })
}
