//! C ABI over the aclnet engine.
//!
//! Models are opaque heap handles created by `aclnet_model_new` or
//! `aclnet_model_load` and released with `aclnet_model_free`. Every
//! fallible call returns an [`AclnetStatus`]; on failure a description is
//! available from `aclnet_last_error` on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use aclnet::audio::AudioClip;
use aclnet::builder::{min_input_len, ConvType, NetworkConfig, WidthMultiplier};
use aclnet::complexity::analyze;
use aclnet::model::Model;
use aclnet::store::{load_model, save_model};
use aclnet::train::classify;
use aclnet::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AclnetStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Shape = 6,
    Numeric = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AclnetConvType {
    Standard = 0,
    Separable = 1,
}

impl From<AclnetConvType> for ConvType {
    fn from(c: AclnetConvType) -> Self {
        match c {
            AclnetConvType::Standard => ConvType::Standard,
            AclnetConvType::Separable => ConvType::Separable,
        }
    }
}

/// Parameter and multiply-add counts of one configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AclnetComplexity {
    pub llf_params: u64,
    pub hlf_params: u64,
    pub total_params: u64,
    pub llf_macs: u64,
    pub hlf_macs: u64,
    pub total_macs: u64,
}

/// Opaque model handle.
pub struct AclnetModel {
    inner: Model<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AclnetStatus {
    match e {
        Error::Config(_) | Error::Degenerate(_) => AclnetStatus::Config,
        Error::Io { .. } => AclnetStatus::Io,
        Error::Wav(_) | Error::Index(_) | Error::Store(_) => AclnetStatus::Format,
        Error::Shape(_) | Error::Size(_) | Error::State(_) => AclnetStatus::Shape,
        Error::Numeric(_) => AclnetStatus::Numeric,
    }
}

struct Failure(AclnetStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any error or panic for `aclnet_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AclnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AclnetStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AclnetStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(AclnetStatus::NullArgument, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(AclnetStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Message for the most recent failure on this thread, or null. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn aclnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aclnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a freshly initialized model with the default front-end
/// settings for `sample_rate` and `conv_type`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn aclnet_model_new(
    sample_rate: u32,
    conv_type: AclnetConvType,
    wm_num: u32,
    wm_den: u32,
    num_classes: u32,
    seed: u64,
    out: *mut *mut AclnetModel,
) -> AclnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let wm = WidthMultiplier::new(wm_num, wm_den)?;
        let config = NetworkConfig {
            num_classes: num_classes as usize,
            ..NetworkConfig::new(sample_rate, conv_type.into(), wm)
        };
        let inner = Model::new(&config, seed)?;
        *out = Box::into_raw(Box::new(AclnetModel { inner }));
        Ok(())
    })
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn aclnet_model_load(path: *const c_char, out: *mut *mut AclnetModel) -> AclnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_model(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(AclnetModel { inner }));
        Ok(())
    })
}

/// Writes a model file atomically.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn aclnet_model_save(model: *const AclnetModel, path: *const c_char) -> AclnetStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        save_model(path_arg(path)?, &model.inner)?;
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aclnet_model_free(model: *mut AclnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn aclnet_model_num_classes(model: *const AclnetModel) -> u32 {
    model.as_ref().map_or(0, |m| m.inner.num_classes() as u32)
}

/// Expected input sample rate in Hz, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn aclnet_model_sample_rate(model: *const AclnetModel) -> u32 {
    model.as_ref().map_or(0, |m| m.inner.config().sample_rate)
}

/// Shortest accepted input, one 10 ms frame, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn aclnet_model_min_input_len(model: *const AclnetModel) -> usize {
    model
        .as_ref()
        .and_then(|m| min_input_len(m.inner.config()).ok())
        .unwrap_or(0)
}

/// Class distribution for a whole waveform of any length of at least one
/// frame. The waveform is normalized to zero mean and unit variance first.
/// The first class-count entries of `probs` receive the distribution;
/// `probs_len` must be at least the class count.
///
/// # Safety
/// `samples` must point to `len` floats and `probs` to `probs_len` floats.
#[no_mangle]
pub unsafe extern "C" fn aclnet_model_infer(
    model: *const AclnetModel,
    samples: *const f32,
    len: usize,
    probs: *mut f32,
    probs_len: usize,
) -> AclnetStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if samples.is_null() {
            return Err(null("samples"));
        }
        if probs.is_null() {
            return Err(null("probs"));
        }
        let k = model.inner.num_classes();
        if probs_len < k {
            return Err(Failure(
                AclnetStatus::BufferTooSmall,
                format!("output buffer holds {probs_len} values, model has {k} classes"),
            ));
        }
        let input = std::slice::from_raw_parts(samples, len).to_vec();
        let clip = AudioClip::new(input, model.inner.config().sample_rate);
        let p = classify(&model.inner, &clip)?;
        std::slice::from_raw_parts_mut(probs, k).copy_from_slice(&p);
        Ok(())
    })
}

/// Parameter and multiply-add counts for a configuration over a window of
/// `window_seconds`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn aclnet_analyze(
    sample_rate: u32,
    conv_type: AclnetConvType,
    wm_num: u32,
    wm_den: u32,
    window_seconds: f64,
    out: *mut AclnetComplexity,
) -> AclnetStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let wm = WidthMultiplier::new(wm_num, wm_den)?;
        let r = analyze(&NetworkConfig::new(sample_rate, conv_type.into(), wm), window_seconds)?;
        *out = AclnetComplexity {
            llf_params: r.llf_params(),
            hlf_params: r.hlf_params(),
            total_params: r.total_params(),
            llf_macs: r.llf_macs(),
            hlf_macs: r.hlf_macs(),
            total_macs: r.total_macs(),
        };
        Ok(())
    })
}
