//! C ABI over the upscaler: load a checkpoint into an opaque handle,
//! render RGB buffers or PNG files at any output size, and free the
//! handle. Every call returns a status code; the most recent failure
//! message is kept per thread and read back with [`usr_last_error`].
//!
//! Conventions:
//! - Handles are created by `usr_model_load` and released by
//!   `usr_model_free`; all other functions borrow them.
//! - Pixel buffers are 8-bit RGB, interleaved, row-major, tightly packed
//!   (`height * width * 3` bytes).
//! - Strings are NUL-terminated UTF-8. The pointer returned by
//!   `usr_last_error` stays valid until the next failing call on the same
//!   thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ultrasr::imaging::{load_png, save_png, Image};
use ultrasr::model::{render, ModelConfig, ModelParams};
use ultrasr::training::{load_checkpoint, TrainError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum UsrStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArg = 1,
    /// An argument was malformed (bad UTF-8, zero dimension, bad scale).
    InvalidArg = 2,
    /// File I/O or checkpoint decoding failed.
    Io = 3,
    /// The operation itself failed; see `usr_last_error`.
    Runtime = 4,
}

/// A loaded model: checkpoint weights plus their configuration.
pub struct UsrModel {
    params: ModelParams<f32>,
    cfg: ModelConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: UsrStatus, message: impl std::fmt::Display) -> UsrStatus {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("NUL bytes stripped");
    });
    status
}

/// Message for the most recent failure on this thread, or an empty string.
///
/// The pointer is owned by the library and invalidated by the next failing
/// call on the same thread. Never free it.
#[no_mangle]
pub extern "C" fn usr_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn usr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn train_error_status(e: &TrainError) -> UsrStatus {
    match e {
        TrainError::Io { .. }
        | TrainError::BadMagic(_)
        | TrainError::BadVersion(_)
        | TrainError::Truncated { .. }
        | TrainError::Corrupt(_) => UsrStatus::Io,
        _ => UsrStatus::Runtime,
    }
}

unsafe fn path_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a Path, UsrStatus> {
    if ptr.is_null() {
        return Err(fail(UsrStatus::NullArg, format!("{what} is null")));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => Err(fail(UsrStatus::InvalidArg, format!("{what} is not valid UTF-8"))),
    }
}

fn guarded(body: impl FnOnce() -> UsrStatus) -> UsrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(UsrStatus::Runtime, "internal panic"),
    }
}

/// Loads a checkpoint from `ckpt_path` into a fresh handle at `*out`.
///
/// On failure `*out` is left untouched. The handle must be released with
/// `usr_model_free`.
///
/// # Safety
/// `ckpt_path` must be a valid NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn usr_model_load(
    ckpt_path: *const c_char,
    out: *mut *mut UsrModel,
) -> UsrStatus {
    guarded(|| {
        if out.is_null() {
            return fail(UsrStatus::NullArg, "out is null");
        }
        let path = match path_arg(ckpt_path, "ckpt_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_checkpoint(path) {
            Ok((params, cfg)) => {
                *out = Box::into_raw(Box::new(UsrModel { params, cfg }));
                UsrStatus::Ok
            }
            Err(e) => fail(train_error_status(&e), e),
        }
    })
}

/// Releases a handle. Accepts null as a no-op.
///
/// # Safety
/// `model` must be null or a pointer obtained from `usr_model_load` that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn usr_model_free(model: *mut UsrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the model's total parameter count to `*out`.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn usr_model_param_count(
    model: *const UsrModel,
    out: *mut u64,
) -> UsrStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return fail(UsrStatus::NullArg, "model/out is null");
        }
        *out = (*model).cfg.param_count() as u64;
        UsrStatus::Ok
    })
}

/// Upscales an interleaved 8-bit RGB buffer to `out_h` x `out_w`.
///
/// `rgb_in` holds `in_h * in_w * 3` bytes; `rgb_out` must have room for
/// `out_h * out_w * 3` bytes and is fully overwritten on success.
///
/// # Safety
/// All pointers must be valid for the stated extents.
#[no_mangle]
pub unsafe extern "C" fn usr_upscale(
    model: *const UsrModel,
    rgb_in: *const u8,
    in_h: usize,
    in_w: usize,
    rgb_out: *mut u8,
    out_h: usize,
    out_w: usize,
) -> UsrStatus {
    guarded(|| {
        if model.is_null() || rgb_in.is_null() || rgb_out.is_null() {
            return fail(UsrStatus::NullArg, "model/rgb_in/rgb_out is null");
        }
        if in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
            return fail(
                UsrStatus::InvalidArg,
                format!("zero dimension ({in_h}x{in_w} -> {out_h}x{out_w})"),
            );
        }
        let model = &*model;
        let input = std::slice::from_raw_parts(rgb_in, in_h * in_w * 3);
        let mut planes = vec![0.0f64; 3 * in_h * in_w];
        for y in 0..in_h {
            for x in 0..in_w {
                for c in 0..3 {
                    planes[(c * in_h + y) * in_w + x] =
                        input[(y * in_w + x) * 3 + c] as f64 / 255.0;
                }
            }
        }
        let img = match Image::from_planar(in_h, in_w, planes) {
            Ok(img) => img,
            Err(e) => return fail(UsrStatus::InvalidArg, e),
        };
        let sr = match render(&img, out_h, out_w, &model.params, &model.cfg) {
            Ok(sr) => sr,
            Err(e) => return fail(UsrStatus::Runtime, e),
        };
        let output = std::slice::from_raw_parts_mut(rgb_out, out_h * out_w * 3);
        for y in 0..out_h {
            for x in 0..out_w {
                for c in 0..3 {
                    output[(y * out_w + x) * 3 + c] =
                        (sr.get(c, y, x) * 255.0).round() as u8;
                }
            }
        }
        UsrStatus::Ok
    })
}

/// Upscales a PNG file by a real factor; output dims are
/// `floor(scale * input dims)`.
///
/// # Safety
/// Both paths must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn usr_upscale_file(
    model: *const UsrModel,
    input_png: *const c_char,
    scale: f64,
    output_png: *const c_char,
) -> UsrStatus {
    guarded(|| {
        if model.is_null() {
            return fail(UsrStatus::NullArg, "model is null");
        }
        let input = match path_arg(input_png, "input_png") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let output = match path_arg(output_png, "output_png") {
            Ok(p) => p,
            Err(s) => return s,
        };
        if !(scale.is_finite() && scale > 0.0) {
            return fail(UsrStatus::InvalidArg, format!("scale {scale} must be positive"));
        }
        let model = &*model;
        let img = match load_png(input) {
            Ok(img) => img,
            Err(e) => return fail(UsrStatus::Io, e),
        };
        let out_h = (scale * img.height() as f64).floor() as usize;
        let out_w = (scale * img.width() as f64).floor() as usize;
        if out_h == 0 || out_w == 0 {
            return fail(
                UsrStatus::InvalidArg,
                format!("scale {scale} collapses the image to zero size"),
            );
        }
        let sr = match render(&img, out_h, out_w, &model.params, &model.cfg) {
            Ok(sr) => sr,
            Err(e) => return fail(UsrStatus::Runtime, e),
        };
        match save_png(&sr, output) {
            Ok(()) => UsrStatus::Ok,
            Err(e) => fail(UsrStatus::Io, e),
        }
    })
}
