//! C interface to `grouprank`.
//!
//! Models and rankers are opaque handles created by `*_load` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`GrkStatus`]; on failure a message is available from [`grk_last_error`]
//! until the next failing call on the same thread. Output pointers are only
//! written on success. Images are 8-bit, row-major, with 1 (gray) or 3 (RGB)
//! interleaved channels.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use grouprank::aesthetics::{predict_aesthetics, AestheticsModel};
use grouprank::emotion::{predict_emotion, ScnnModel};
use grouprank::fusion::{fuse, ChannelBounds, ChannelScores, FittedRanker, PoolMode, Ranker};
use grouprank::metrics::{EvalReport, RankedSet};
use grouprank::quality::{extract_features, QualityModel};
use grouprank::raster::{to_grayscale, RasterImage};
use grouprank::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    ModelFormat = 4,
    Image = 5,
    Numeric = 6,
    Panic = 7,
}

/// Pooling rule for [`grk_ranker_new_pool`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrkPool {
    Mean = 0,
    Max = 1,
}

/// Aggregated ranking metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GrkMetrics {
    pub bim: f64,
    pub psp: f64,
    pub rho: f64,
    pub n_sets: usize,
}

pub struct GrkQualityModel {
    inner: QualityModel,
}

pub struct GrkEmotionModel {
    inner: ScnnModel,
}

pub struct GrkAestheticsModel {
    inner: AestheticsModel,
}

pub struct GrkRanker {
    inner: FittedRanker,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> GrkStatus {
    match err {
        Error::Io { .. } | Error::MissingImage { .. } => GrkStatus::Io,
        Error::ModelFormat(_) | Error::ManifestParse { .. } | Error::Config(_) => {
            GrkStatus::ModelFormat
        }
        Error::MalformedHeader(_)
        | Error::TruncatedPayload { .. }
        | Error::UnsupportedBitDepth(_)
        | Error::AlphaUnsupported
        | Error::UnsupportedFormat(_)
        | Error::InvalidRaster(_)
        | Error::TooSmall { .. } => GrkStatus::Image,
        Error::DegenerateSamples(_)
        | Error::OneSidedSamples
        | Error::TooFewSamples { .. }
        | Error::Divergence(_) => GrkStatus::Numeric,
        _ => GrkStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> GrkStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => GrkStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            GrkStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            GrkStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    non_null(path, "path")?;
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn image_arg(
    pixels: *const u8,
    width: usize,
    height: usize,
    channels: usize,
) -> Result<RasterImage, Failure> {
    non_null(pixels, "pixels")?;
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::InvalidArgument("image dimensions overflow".into()))?;
    let data = std::slice::from_raw_parts(pixels, len)
        .iter()
        .map(|&b| f64::from(b))
        .collect();
    Ok(to_grayscale(&RasterImage::new(
        width, height, channels, data,
    )?))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    non_null(out, "out")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Message of the last failing call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn grk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn grk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grk_quality_model_load(
    path: *const c_char,
    out: *mut *mut GrkQualityModel,
) -> GrkStatus {
    guard(|| {
        let inner = QualityModel::load(&path_arg(path)?)?;
        store(out, GrkQualityModel { inner })
    })
}

/// # Safety
/// `model` must come from [`grk_quality_model_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn grk_quality_model_free(model: *mut GrkQualityModel) {
    free_handle(model)
}

/// Quality channel score in `[0, 1]`.
///
/// # Safety
/// `pixels` must hold `width * height * channels` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn grk_quality_score(
    model: *const GrkQualityModel,
    pixels: *const u8,
    width: usize,
    height: usize,
    channels: usize,
    out: *mut f64,
) -> GrkStatus {
    guard(|| {
        let m = &*non_null(model, "model")?;
        non_null(out, "out")?;
        let img = image_arg(pixels, width, height, channels)?;
        *out = m.inner.predict_normalized(&extract_features(&img)?);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grk_emotion_model_load(
    path: *const c_char,
    out: *mut *mut GrkEmotionModel,
) -> GrkStatus {
    guard(|| {
        let inner = ScnnModel::load(&path_arg(path)?)?;
        store(out, GrkEmotionModel { inner })
    })
}

/// # Safety
/// `model` must come from [`grk_emotion_model_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn grk_emotion_model_free(model: *mut GrkEmotionModel) {
    free_handle(model)
}

/// Group-happiness channel score in `[0, 1]`.
///
/// # Safety
/// `pixels` must hold `width * height * channels` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn grk_emotion_score(
    model: *const GrkEmotionModel,
    pixels: *const u8,
    width: usize,
    height: usize,
    channels: usize,
    out: *mut f64,
) -> GrkStatus {
    guard(|| {
        let m = &*non_null(model, "model")?;
        non_null(out, "out")?;
        let img = image_arg(pixels, width, height, channels)?;
        *out = predict_emotion(&m.inner, &img)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grk_aesthetics_model_load(
    path: *const c_char,
    out: *mut *mut GrkAestheticsModel,
) -> GrkStatus {
    guard(|| {
        let inner = AestheticsModel::load(&path_arg(path)?)?;
        store(out, GrkAestheticsModel { inner })
    })
}

/// # Safety
/// `model` must come from [`grk_aesthetics_model_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn grk_aesthetics_model_free(model: *mut GrkAestheticsModel) {
    free_handle(model)
}

/// Aesthetics channel score in `[0, 1]`.
///
/// # Safety
/// `pixels` must hold `width * height * channels` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn grk_aesthetics_score(
    model: *const GrkAestheticsModel,
    pixels: *const u8,
    width: usize,
    height: usize,
    channels: usize,
    out: *mut f64,
) -> GrkStatus {
    guard(|| {
        let m = &*non_null(model, "model")?;
        non_null(out, "out")?;
        let img = image_arg(pixels, width, height, channels)?;
        *out = predict_aesthetics(&m.inner, &img)?;
        Ok(())
    })
}

/// Loads a trained ranker file (rank SVM, rank network or pooling).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grk_ranker_load(
    path: *const c_char,
    out: *mut *mut GrkRanker,
) -> GrkStatus {
    guard(|| {
        let inner = FittedRanker::load(&path_arg(path)?)?;
        store(out, GrkRanker { inner })
    })
}

/// A pooling ranker that needs no model file.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grk_ranker_new_pool(pool: GrkPool, out: *mut *mut GrkRanker) -> GrkStatus {
    guard(|| {
        let mode = match pool {
            GrkPool::Mean => PoolMode::Mean,
            GrkPool::Max => PoolMode::Max,
        };
        let inner = FittedRanker {
            bounds: ChannelBounds::identity(),
            ranker: Ranker::Pool(mode),
        };
        store(out, GrkRanker { inner })
    })
}

/// # Safety
/// `ranker` must come from a `grk_ranker_*` constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn grk_ranker_free(ranker: *mut GrkRanker) {
    free_handle(ranker)
}

/// Ranks `n` images given their `(emotion, aesthetics, quality)` scores,
/// laid out as `n` consecutive triples. Writes ranks (1 = best) to
/// `ranks_out[0..n]`.
///
/// # Safety
/// `scores` must hold `3 * n` doubles and `ranks_out` room for `n` values.
#[no_mangle]
pub unsafe extern "C" fn grk_ranker_rank(
    ranker: *const GrkRanker,
    scores: *const f64,
    n: usize,
    ranks_out: *mut usize,
) -> GrkStatus {
    guard(|| {
        let r = &*non_null(ranker, "ranker")?;
        non_null(scores, "scores")?;
        non_null(ranks_out, "ranks_out")?;
        let triples = std::slice::from_raw_parts(scores, n.saturating_mul(3));
        let set = triples
            .chunks_exact(3)
            .map(|c| ChannelScores::new(c[0], c[1], c[2]))
            .collect::<Result<Vec<_>, _>>()?;
        let ranks = r.inner.rank(&set)?;
        std::slice::from_raw_parts_mut(ranks_out, n).copy_from_slice(&ranks);
        Ok(())
    })
}

/// Writes the fusion vector `[e, e^2, a, a^2, q, q^2]` to `out[0..6]`.
///
/// # Safety
/// `out` must have room for 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn grk_fuse(
    emotion: f64,
    aesthetics: f64,
    quality: f64,
    out: *mut f64,
) -> GrkStatus {
    guard(|| {
        non_null(out, "out")?;
        let kappa = fuse(&ChannelScores {
            emotion,
            aesthetics,
            quality,
        })?;
        std::slice::from_raw_parts_mut(out, 6).copy_from_slice(kappa.values());
        Ok(())
    })
}

/// Metrics over `n_sets` sets. Set `s` has `set_sizes[s]` images; the rank
/// arrays concatenate the sets in order.
///
/// # Safety
/// `set_sizes` must hold `n_sets` values and both rank arrays
/// `sum(set_sizes)` values.
#[no_mangle]
pub unsafe extern "C" fn grk_metrics(
    true_ranks: *const usize,
    predicted_ranks: *const usize,
    set_sizes: *const usize,
    n_sets: usize,
    out: *mut GrkMetrics,
) -> GrkStatus {
    guard(|| {
        non_null(true_ranks, "true_ranks")?;
        non_null(predicted_ranks, "predicted_ranks")?;
        non_null(set_sizes, "set_sizes")?;
        non_null(out, "out")?;
        let sizes = std::slice::from_raw_parts(set_sizes, n_sets);
        let total = sizes
            .iter()
            .try_fold(0usize, |acc, &n| acc.checked_add(n))
            .ok_or_else(|| Error::InvalidArgument("set sizes overflow".into()))?;
        let t = std::slice::from_raw_parts(true_ranks, total);
        let p = std::slice::from_raw_parts(predicted_ranks, total);
        let mut sets = Vec::with_capacity(n_sets);
        let mut start = 0;
        for (s, &n) in sizes.iter().enumerate() {
            let end = start + n;
            sets.push(RankedSet::new(
                s.to_string(),
                t[start..end].to_vec(),
                p[start..end].to_vec(),
            )?);
            start = end;
        }
        let r = EvalReport::from_sets(&sets)?;
        *out = GrkMetrics {
            bim: r.bim,
            psp: r.psp,
            rho: r.rho,
            n_sets: r.n_sets,
        };
        Ok(())
    })
}
