//! C ABI over the `henet` engine.
//!
//! Models are opaque `HenetModel` handles created by `henet_model_build`,
//! `henet_model_from_config` or `henet_model_load` and released with
//! `henet_model_free`. Every fallible call returns a `HenetStatus`; on failure
//! `henet_last_error_message` describes the error for the calling thread.
//! Panics never cross the boundary: they are reported as `HENET_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use henet::analyze::{count_macs, count_params};
use henet::arch::{build_model, nearest_divisor_pair, Mode, ModelFamily, ModelGraph, NetworkConfig};
use henet::data::{load_model, save_model};
use henet::{Error, ErrorCategory, Shape, Tensor};

/// Result codes. Build, data, numeric and I/O errors match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HenetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Build = 3,
    Data = 4,
    Numeric = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HenetFamily {
    Henet = 0,
    Shufflenet = 1,
}

/// Model family from its `HenetFamily` code. Raw integers keep out-of-range values from C well-defined.
fn family(code: u32) -> Result<ModelFamily, Failure> {
    match code {
        c if c == HenetFamily::Henet as u32 => Ok(ModelFamily::HeNet),
        c if c == HenetFamily::Shufflenet as u32 => Ok(ModelFamily::ShuffleNet),
        other => Err(Failure(
            HenetStatus::InvalidArgument,
            format!("unknown model family {other}"),
        )),
    }
}

/// Opaque model handle.
pub struct HenetModel {
    graph: ModelGraph<f32>,
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

struct Failure(HenetStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.category() {
            ErrorCategory::Build => HenetStatus::Build,
            ErrorCategory::Data => HenetStatus::Data,
            ErrorCategory::Numeric => HenetStatus::Numeric,
            ErrorCategory::Io => HenetStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(HenetStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, converting errors and panics into a status plus the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> HenetStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HenetStatus::Ok,
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
            HenetStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HenetStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_ref<'a>(m: *const HenetModel) -> Result<&'a HenetModel, Failure> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn store(out: *mut *mut HenetModel, graph: ModelGraph<f32>) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(HenetModel { graph }));
    Ok(())
}

/// Builds a model with the default stage layout. `family` is a `HenetFamily` value;
/// `num_classes` and `input_size` of 0 keep the defaults.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn henet_model_build(
    family_code: u32,
    repeat: u32,
    input_size: u32,
    num_classes: u32,
    seed: u64,
    out: *mut *mut HenetModel,
) -> HenetStatus {
    guard(|| {
        let mut cfg = NetworkConfig::with_repeat(repeat as usize);
        if input_size != 0 {
            cfg.input_size = input_size as usize;
        }
        if num_classes != 0 {
            cfg.num_classes = num_classes as usize;
        }
        store(out, build_model(family(family_code)?, &cfg, seed)?)
    })
}

/// Builds a model from `key = value` config text.
///
/// # Safety
/// `config` must be a NUL-terminated string; `out` as for [`henet_model_build`].
#[no_mangle]
pub unsafe extern "C" fn henet_model_from_config(
    family_code: u32,
    config: *const c_char,
    seed: u64,
    out: *mut *mut HenetModel,
) -> HenetStatus {
    guard(|| {
        if config.is_null() {
            return Err(null("config"));
        }
        let text = CStr::from_ptr(config)
            .to_str()
            .map_err(|_| Failure(HenetStatus::InvalidArgument, "config is not UTF-8".into()))?;
        let cfg = NetworkConfig::parse(text)?;
        store(out, build_model(family(family_code)?, &cfg, seed)?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` as for [`henet_model_build`].
#[no_mangle]
pub unsafe extern "C" fn henet_model_load(path: *const c_char, out: *mut *mut HenetModel) -> HenetStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, load_model(&path)?)
    })
}

/// # Safety
/// `model` must come from this library and not be freed; `path` as for [`henet_model_load`].
#[no_mangle]
pub unsafe extern "C" fn henet_model_save(model: *const HenetModel, path: *const c_char) -> HenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        save_model(&m.graph, &path_arg(path)?)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a live handle from this library; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn henet_model_free(model: *mut HenetModel) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(model))));
    }
}

/// Channels, height and width of one input sample.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn henet_model_input_shape(
    model: *const HenetModel,
    channels: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> HenetStatus {
    guard(|| {
        let s = model_ref(model)?.graph.input_shape();
        if channels.is_null() || height.is_null() || width.is_null() {
            return Err(null("shape output"));
        }
        *channels = s.c;
        *height = s.h;
        *width = s.w;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn henet_model_num_classes(model: *const HenetModel, out: *mut usize) -> HenetStatus {
    guard(|| {
        let k = model_ref(model)?.graph.num_classes();
        *out.as_mut().ok_or_else(|| null("out"))? = k;
        Ok(())
    })
}

/// Inference-mode forward pass over `batch` samples laid out `N·C·H·W`.
/// `input` holds `batch·C·H·W` floats; `scores` receives `batch·num_classes`.
///
/// # Safety
/// The buffers must be valid for the lengths given.
#[no_mangle]
pub unsafe extern "C" fn henet_model_forward(
    model: *const HenetModel,
    input: *const f32,
    input_len: usize,
    batch: usize,
    scores: *mut f32,
    scores_len: usize,
) -> HenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        if input.is_null() || scores.is_null() {
            return Err(null("buffer"));
        }
        let s = m.graph.input_shape();
        let shape = Shape::new(batch, s.c, s.h, s.w);
        if batch == 0 || input_len != shape.numel() {
            return Err(Failure(
                HenetStatus::InvalidArgument,
                format!("input holds {input_len} floats, batch {batch} needs {}", shape.numel()),
            ));
        }
        let need = batch * m.graph.num_classes();
        if scores_len < need {
            return Err(Failure(
                HenetStatus::BufferTooSmall,
                format!("scores holds {scores_len} floats, need {need}"),
            ));
        }
        let x = Tensor::from_vec(shape, std::slice::from_raw_parts(input, input_len).to_vec())?;
        let y = m.graph.forward(&x, Mode::Infer)?;
        std::slice::from_raw_parts_mut(scores, need).copy_from_slice(y.data());
        Ok(())
    })
}

/// Parameter total; batch-norm gamma/beta are included when `include_bn` is nonzero.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn henet_model_param_count(
    model: *const HenetModel,
    include_bn: u8,
    out: *mut u64,
) -> HenetStatus {
    guard(|| {
        let (_, total) = count_params(&model_ref(model)?.graph, include_bn != 0);
        *out.as_mut().ok_or_else(|| null("out"))? = total;
        Ok(())
    })
}

/// Multiply-accumulates of one batch-1 forward pass.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn henet_model_mac_count(model: *const HenetModel, out: *mut u64) -> HenetStatus {
    guard(|| {
        let g = &model_ref(model)?.graph;
        let (_, total) = count_macs(g, g.input_shape())?;
        *out.as_mut().ok_or_else(|| null("out"))? = total;
        Ok(())
    })
}

/// `m·n = channels` with `m > n` and `m − n` minimal.
///
/// # Safety
/// `m` and `n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn henet_nearest_divisor_pair(channels: usize, m: *mut usize, n: *mut usize) -> HenetStatus {
    guard(|| {
        let (a, b) = nearest_divisor_pair(channels)?;
        *m.as_mut().ok_or_else(|| null("m"))? = a;
        *n.as_mut().ok_or_else(|| null("n"))? = b;
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn henet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version, NUL-terminated, static.
#[no_mangle]
pub extern "C" fn henet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
