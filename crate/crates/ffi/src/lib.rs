//! C ABI over the `fanet` library.
//!
//! Every fallible function returns a [`FanetStatus`]; on failure the message
//! is kept per thread and read with [`fanet_last_error_message`]. Models and
//! confusion matrices are opaque handles released with their `_free`
//! functions. Image buffers are planar `N×3×S×S` floats in `[0, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fanet::arch::{ArchitectureSpec, Checkpoint, Model, Variant};
use fanet::attention::{fastidious_excite, ExcitationParams, GradMode};
use fanet::metrics::{compute_metrics, ConfusionMatrix};
use fanet::ops::Mode;
use fanet::{no_grad, Error, Tensor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FanetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Dimension = 4,
    Checkpoint = 5,
    Io = 6,
    Label = 7,
    Empty = 8,
    Numeric = 9,
    Panic = 10,
}

/// Opaque single-precision network.
pub struct FanetModel {
    model: Model<f32>,
}

/// Opaque confusion matrix.
pub struct FanetConfusion {
    cm: ConfusionMatrix,
}

/// Summary metrics, fractions in `[0, 1]`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FanetMetrics {
    pub pixel_acc: f64,
    pub mean_acc: f64,
    pub mean_iu: f64,
    pub fw_iu: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(s) => s,
    Err(_) => panic!("version string has an interior nul"),
};

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> FanetStatus {
    match e {
        Error::Dimension { .. } => FanetStatus::Dimension,
        Error::Config(_) | Error::Usage(_) => FanetStatus::Config,
        Error::Label(_) | Error::UnknownColor { .. } | Error::Pairing { .. } => FanetStatus::Label,
        Error::Checkpoint(_) => FanetStatus::Checkpoint,
        Error::Io(_) | Error::Image(_) => FanetStatus::Io,
        Error::Empty(_) => FanetStatus::Empty,
        Error::DegenerateStatistics { .. } | Error::Diverged { .. } => FanetStatus::Numeric,
    }
}

struct Fail(FanetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail(status: FanetStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

/// Runs `f`, recording the error message and converting panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FanetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FanetStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            FanetStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(FanetStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FanetStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(FanetStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(FanetStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| fail(FanetStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(fail(FanetStatus::NullPointer, "output handle pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version, a static nul-terminated string.
#[no_mangle]
pub extern "C" fn fanet_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn fanet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a model from an architecture spec in JSON, e.g.
/// `{"variant": "fanet", "base_width": 8, "input_size": 96}`.
///
/// # Safety
/// `spec_json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fanet_model_new(spec_json: *const c_char, seed: u64, out: *mut *mut FanetModel) -> FanetStatus {
    guard(|| {
        let text = str_arg(spec_json, "spec_json")?;
        let spec: ArchitectureSpec =
            serde_json::from_str(text).map_err(|e| fail(FanetStatus::Config, format!("spec JSON: {e}")))?;
        let model = Model::build(&spec, seed)?;
        write_out(out, FanetModel { model })
    })
}

/// Builds a model of a named variant (`unet`, `unet-se`, `fanet-s`,
/// `fanet-i`, `fanet`) with default settings apart from width and size.
///
/// # Safety
/// `variant` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fanet_model_new_variant(
    variant: *const c_char,
    base_width: usize,
    input_size: usize,
    seed: u64,
    out: *mut *mut FanetModel,
) -> FanetStatus {
    guard(|| {
        let v: Variant = str_arg(variant, "variant")?.parse()?;
        let spec = ArchitectureSpec { base_width, input_size, ..ArchitectureSpec::full_scale(v) };
        let model = Model::build(&spec, seed)?;
        write_out(out, FanetModel { model })
    })
}

/// Loads a checkpoint written by the library or the CLI.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fanet_model_load(path: *const c_char, out: *mut *mut FanetModel) -> FanetStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let model = Checkpoint::load(&path)?.into_model()?;
        write_out(out, FanetModel { model })
    })
}

/// # Safety
/// `model` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fanet_model_save(model: *const FanetModel, path: *const c_char) -> FanetStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        Checkpoint::from_model(&m.model).save(&path)?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from a `fanet_model_*` constructor and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn fanet_model_free(model: *mut FanetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fanet_model_param_count(model: *const FanetModel, out: *mut usize) -> FanetStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let out = out.as_mut().ok_or_else(|| fail(FanetStatus::NullPointer, "out is null"))?;
        *out = m.model.param_count();
        Ok(())
    })
}

/// Spatial input size `S` and number of classes `K` of the model.
///
/// # Safety
/// `model` must be a live handle; both outputs writable.
#[no_mangle]
pub unsafe extern "C" fn fanet_model_shape(
    model: *const FanetModel,
    input_size: *mut usize,
    num_classes: *mut usize,
) -> FanetStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if input_size.is_null() || num_classes.is_null() {
            return Err(fail(FanetStatus::NullPointer, "output pointer is null"));
        }
        *input_size = m.model.spec.input_size;
        *num_classes = m.model.spec.num_classes;
        Ok(())
    })
}

fn images_tensor(m: &FanetModel, images: &[f32], n: usize) -> Result<Tensor<f32>, Fail> {
    let s = m.model.spec.input_size;
    if n == 0 {
        return Err(fail(FanetStatus::InvalidArgument, "batch size is zero"));
    }
    if images.len() != n * 3 * s * s {
        return Err(fail(
            FanetStatus::Dimension,
            format!("expected {} image values for {n}×3×{s}×{s}, got {}", n * 3 * s * s, images.len()),
        ));
    }
    Ok(Tensor::from_vec(&[n, 3, s, s], images.to_vec())?)
}

/// Eval-mode logits, `N×K×S×S` planar.
///
/// # Safety
/// `images` must hold `images_len` floats and `logits` `logits_len` floats.
#[no_mangle]
pub unsafe extern "C" fn fanet_model_forward(
    model: *const FanetModel,
    images: *const f32,
    images_len: usize,
    batch: usize,
    logits: *mut f32,
    logits_len: usize,
) -> FanetStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let x = images_tensor(m, slice_arg(images, images_len, "images")?, batch)?;
        let y = no_grad(|| m.model.forward(&x, Mode::Eval))?;
        let out = slice_out(logits, logits_len, "logits")?;
        if out.len() != y.numel() {
            return Err(fail(FanetStatus::Dimension, format!("logits buffer holds {}, need {}", out.len(), y.numel())));
        }
        out.copy_from_slice(&y.data());
        Ok(())
    })
}

/// Per-pixel class ids, `N×S×S`.
///
/// # Safety
/// `images` must hold `images_len` floats and `classes` `classes_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fanet_model_predict(
    model: *const FanetModel,
    images: *const f32,
    images_len: usize,
    batch: usize,
    classes: *mut u8,
    classes_len: usize,
) -> FanetStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let x = images_tensor(m, slice_arg(images, images_len, "images")?, batch)?;
        let pred = m.model.predict(&x)?;
        let out = slice_out(classes, classes_len, "classes")?;
        if out.len() != pred.len() {
            return Err(fail(FanetStatus::Dimension, format!("class buffer holds {}, need {}", out.len(), pred.len())));
        }
        out.copy_from_slice(&pred);
        Ok(())
    })
}

/// Applies the excitation rule to `x: N×C×HW`: `y = s·x` where `x > g`,
/// else `x`, with `s` and `g` of length `N·C`.
///
/// # Safety
/// `x` and `out` must hold `n·c·hw` floats; `s` and `g` `n·c` floats.
#[no_mangle]
pub unsafe extern "C" fn fanet_excite(
    x: *const f32,
    n: usize,
    c: usize,
    hw: usize,
    s: *const f32,
    g: *const f32,
    out: *mut f32,
) -> FanetStatus {
    guard(|| {
        if n == 0 || c == 0 || hw == 0 {
            return Err(fail(FanetStatus::InvalidArgument, "extents must be positive"));
        }
        let xs = slice_arg(x, n * c * hw, "x")?;
        let ss = slice_arg(s, n * c, "s")?;
        let gs = slice_arg(g, n * c, "g")?;
        let xt = Tensor::from_vec(&[n, c, hw, 1], xs.to_vec())?;
        let p = ExcitationParams::new(Tensor::from_vec(&[n, c], ss.to_vec())?, Tensor::from_vec(&[n, c], gs.to_vec())?)?;
        let y = no_grad(|| fastidious_excite(&xt, &p, GradMode::Hard, 0.1))?;
        slice_out(out, n * c * hw, "out")?.copy_from_slice(&y.data());
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fanet_confusion_new(classes: usize, out: *mut *mut FanetConfusion) -> FanetStatus {
    guard(|| {
        if !(1..=256).contains(&classes) {
            return Err(fail(FanetStatus::InvalidArgument, format!("classes must be in 1..=256, got {classes}")));
        }
        write_out(out, FanetConfusion { cm: ConfusionMatrix::new(classes) })
    })
}

/// Adds `len` pixels of predictions against ground truth.
///
/// # Safety
/// `cm` must be a live handle; `pred` and `gt` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fanet_confusion_accumulate(
    cm: *mut FanetConfusion,
    pred: *const u8,
    gt: *const u8,
    len: usize,
) -> FanetStatus {
    guard(|| {
        let cm = cm.as_mut().ok_or_else(|| fail(FanetStatus::NullPointer, "cm is null"))?;
        cm.cm.accumulate(slice_arg(pred, len, "pred")?, slice_arg(gt, len, "gt")?)?;
        Ok(())
    })
}

/// Copies the `K×K` counts, row = ground truth, column = prediction.
///
/// # Safety
/// `cm` must be a live handle; `counts` must hold `counts_len` values.
#[no_mangle]
pub unsafe extern "C" fn fanet_confusion_counts(
    cm: *const FanetConfusion,
    counts: *mut u64,
    counts_len: usize,
) -> FanetStatus {
    guard(|| {
        let cm = handle(cm, "cm")?;
        let src = cm.cm.counts();
        let out = slice_out(counts, counts_len, "counts")?;
        if out.len() != src.len() {
            return Err(fail(FanetStatus::Dimension, format!("counts buffer holds {}, need {}", out.len(), src.len())));
        }
        out.copy_from_slice(src);
        Ok(())
    })
}

/// # Safety
/// `cm` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fanet_confusion_metrics(cm: *const FanetConfusion, out: *mut FanetMetrics) -> FanetStatus {
    guard(|| {
        let cm = handle(cm, "cm")?;
        let out = out.as_mut().ok_or_else(|| fail(FanetStatus::NullPointer, "out is null"))?;
        let m = compute_metrics(&cm.cm)?;
        *out = FanetMetrics { pixel_acc: m.pixel_acc, mean_acc: m.mean_acc, mean_iu: m.mean_iu, fw_iu: m.fw_iu };
        Ok(())
    })
}

/// Releases a confusion matrix. Null is ignored.
///
/// # Safety
/// `cm` must come from [`fanet_confusion_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fanet_confusion_free(cm: *mut FanetConfusion) {
    if !cm.is_null() {
        drop(Box::from_raw(cm));
    }
}
