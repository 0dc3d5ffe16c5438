//! C ABI for the `topsom` engine.
//!
//! Every function returns a [`TopsomStatus`]. On failure the message is kept in a
//! thread-local slot readable through [`topsom_last_error_message`]. Handles are
//! opaque and must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use topsom::cli::{load_model, save_model, train_run, RunConfig};
use topsom::dataset::{load_csv, synth_rings, synth_uniform};
use topsom::metrics::quantization_error;
use topsom::trainer::map_samples;
use topsom::{DataMatrix, DataSource, SomError, SomModel};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopsomStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    CorruptFile = 6,
    Config = 7,
    Training = 8,
    Timeout = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Row-major sample matrix.
pub struct TopsomData {
    inner: DataMatrix,
}

/// Trained map.
pub struct TopsomModel {
    inner: SomModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &SomError) -> TopsomStatus {
    match err {
        SomError::Io { .. } => TopsomStatus::Io,
        SomError::Parse { .. } | SomError::Ragged { .. } => TopsomStatus::Parse,
        SomError::DimensionMismatch { .. } => TopsomStatus::DimensionMismatch,
        SomError::CorruptShard { .. } | SomError::CorruptModel(_) => TopsomStatus::CorruptFile,
        SomError::Config(_) => TopsomStatus::Config,
        SomError::Empty(_) | SomError::InvalidArgument(_) => TopsomStatus::InvalidArgument,
        SomError::Disconnected(_) | SomError::NonFinite { .. } | SomError::Worker { .. } => TopsomStatus::Training,
        SomError::ReduceTimeout { .. } | SomError::Deadline { .. } => TopsomStatus::Timeout,
    }
}

struct Fail(TopsomStatus, String);

impl From<SomError> for Fail {
    fn from(e: SomError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F>(f: F) -> TopsomStatus
where
    F: FnOnce() -> Result<(), Fail>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TopsomStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TopsomStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(TopsomStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(TopsomStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn topsom_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `n_rows × n_cols` row-major values into a new data handle.
///
/// # Safety
/// `values` must point to `n_rows * n_cols` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topsom_data_from_values(
    values: *const f32,
    n_rows: usize,
    n_cols: usize,
    out: *mut *mut TopsomData,
) -> TopsomStatus {
    guard(|| {
        let len = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| Fail(TopsomStatus::InvalidArgument, "matrix size overflows".into()))?;
        if values.is_null() && len > 0 {
            return Err(null("values"));
        }
        let v = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(values, len).to_vec() };
        put(out, TopsomData { inner: DataMatrix::new(n_rows, n_cols, v)? })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topsom_data_from_csv(path: *const c_char, has_header: bool, out: *mut *mut TopsomData) -> TopsomStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, TopsomData { inner: load_csv(&path, has_header)? })
    })
}

/// Two noisy concentric circles in 2-D.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topsom_data_synth_rings(n_rows: usize, noise: f64, seed: u64, out: *mut *mut TopsomData) -> TopsomStatus {
    guard(|| put(out, TopsomData { inner: synth_rings(n_rows, noise, seed)? }))
}

/// Uniform values in `[0, 1)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topsom_data_synth_uniform(
    n_rows: usize,
    n_cols: usize,
    seed: u64,
    out: *mut *mut TopsomData,
) -> TopsomStatus {
    guard(|| put(out, TopsomData { inner: synth_uniform(n_rows, n_cols, seed)? }))
}

/// # Safety
/// `data` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn topsom_data_n_rows(data: *const TopsomData) -> usize {
    data.as_ref().map_or(0, |d| d.inner.n_rows())
}

/// # Safety
/// `data` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn topsom_data_n_cols(data: *const TopsomData) -> usize {
    data.as_ref().map_or(0, |d| d.inner.n_cols())
}

/// # Safety
/// `data` must come from a `topsom_data_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn topsom_data_free(data: *mut TopsomData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Trains on every row of `data`. `config_text` uses the run-config format
/// (`key = value` lines or JSON); its map, schedule, sampling and worker settings
/// apply, while dataset, split and output keys are ignored. NULL means defaults.
///
/// # Safety
/// `data` must be live; `config_text` NULL or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn topsom_train(
    data: *const TopsomData,
    config_text: *const c_char,
    out: *mut *mut TopsomModel,
) -> TopsomStatus {
    guard(|| {
        let data = ref_arg(data, "data")?;
        let run = if config_text.is_null() {
            RunConfig::default()
        } else {
            RunConfig::parse_unchecked(str_arg(config_text, "config_text")?, std::path::Path::new(""))?
        };
        let (model, _) = train_run(&run, DataSource::Memory(&data.inner), false)?;
        put(out, TopsomModel { inner: model })
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn topsom_model_load(path: *const c_char, out: *mut *mut TopsomModel) -> TopsomStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, TopsomModel { inner: load_model(&path)? })
    })
}

/// # Safety
/// `model` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn topsom_model_save(model: *const TopsomModel, path: *const c_char) -> TopsomStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        Ok(save_model(&model.inner, &path)?)
    })
}

/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn topsom_model_n_nodes(model: *const TopsomModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_nodes())
}

/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn topsom_model_dim(model: *const TopsomModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim)
}

/// Copies the `n_nodes × dim` weights into `out` (capacity `len` floats).
///
/// # Safety
/// `model` must be live; `out` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn topsom_model_weights(model: *const TopsomModel, out: *mut f32, len: usize) -> TopsomStatus {
    guard(|| {
        let w = &ref_arg(model, "model")?.inner.weights;
        if len < w.len() {
            return Err(Fail(
                TopsomStatus::BufferTooSmall,
                format!("need {} floats, got {len}", w.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(w.as_ptr(), out, w.len());
        Ok(())
    })
}

/// Mean distance from each row of `data` to its best-matching node.
///
/// # Safety
/// `model` and `data` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn topsom_model_quantization_error(
    model: *const TopsomModel,
    data: *const TopsomData,
    out: *mut f64,
) -> TopsomStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let data = ref_arg(data, "data")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = quantization_error(&model.inner, &data.inner)?;
        Ok(())
    })
}

/// Best-matching node and distance per row. Both arrays need `n_rows` slots.
///
/// # Safety
/// `model` and `data` must be live; `bmus` and `distances` must hold `len` items.
#[no_mangle]
pub unsafe extern "C" fn topsom_model_map(
    model: *const TopsomModel,
    data: *const TopsomData,
    bmus: *mut u32,
    distances: *mut f64,
    len: usize,
) -> TopsomStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let data = ref_arg(data, "data")?;
        let n = data.inner.n_rows();
        if len < n {
            return Err(Fail(TopsomStatus::BufferTooSmall, format!("need {n} slots, got {len}")));
        }
        if n > 0 && (bmus.is_null() || distances.is_null()) {
            return Err(null("output array"));
        }
        for (i, (b, d)) in map_samples(&model.inner, &data.inner)?.into_iter().enumerate() {
            *bmus.add(i) = b;
            *distances.add(i) = d;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must come from `topsom_train` or `topsom_model_load` and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn topsom_model_free(model: *mut TopsomModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
