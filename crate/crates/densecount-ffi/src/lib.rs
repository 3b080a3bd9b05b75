//! C ABI over the densecount core.
//!
//! Conventions:
//! - Handles (`DcAnnotations`, `DcDensityMap`) are opaque; free them with
//!   the matching `dc_*_free`, which accepts null.
//! - Fallible calls return a [`DcStatus`]; on anything but `DC_STATUS_OK`
//!   a thread-local message is available via [`dc_last_error_message`]
//!   until the next failing call on the same thread.
//! - Strings cross the boundary as NUL-terminated UTF-8.
//! - Pure arithmetic (yield models) returns plain doubles.

#![allow(clippy::missing_safety_doc)]

use densecount::dataset;
use densecount::density::{
    self, DensityMap, KernelSpec, Point, PointAnnotationSet,
};
use densecount::metrics::{self, CountPair};
use densecount::{dgrd, yield_model};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

/// Result code for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Utf8 = 3,
    Io = 4,
    Parse = 5,
    Validation = 6,
    OutOfBounds = 7,
    InsufficientData = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: DcStatus, message: impl Into<Vec<u8>>) -> DcStatus {
    let message = CString::new(message).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
    status
}

fn fail_density(err: density::DensityError) -> DcStatus {
    let status = match &err {
        density::DensityError::OutOfBounds { .. }
        | density::DensityError::PointOutOfBounds { .. } => DcStatus::OutOfBounds,
        density::DensityError::InsufficientNeighbors { .. } => DcStatus::InsufficientData,
        _ => DcStatus::InvalidArgument,
    };
    fail(status, err.to_string())
}

fn fail_dgrd(err: dgrd::DgrdError) -> DcStatus {
    let status = match &err {
        dgrd::DgrdError::Io(_) => DcStatus::Io,
        _ => DcStatus::Parse,
    };
    fail(status, err.to_string())
}

/// Message for the most recent failure on this thread; never null, valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dc_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, DcStatus> {
    if ptr.is_null() {
        return Err(fail(DcStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(DcStatus::Utf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, DcStatus> {
    if ptr.is_null() {
        Err(fail(DcStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(&mut *ptr)
    }
}

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

/// Opaque per-image point annotation set.
pub struct DcAnnotations(PointAnnotationSet);

/// Builds an annotation set from parallel coordinate arrays. Every point
/// must satisfy `0 <= x < width`, `0 <= y < height`.
#[no_mangle]
pub unsafe extern "C" fn dc_annotations_new(
    image_id: *const c_char,
    width: u32,
    height: u32,
    xs: *const f64,
    ys: *const f64,
    len: usize,
    out: *mut *mut DcAnnotations,
) -> DcStatus {
    let out = match out_arg(out, "out") {
        Ok(out) => out,
        Err(status) => return status,
    };
    *out = ptr::null_mut();
    let image_id = match str_arg(image_id, "image_id") {
        Ok(s) => s,
        Err(status) => return status,
    };
    if len > 0 && (xs.is_null() || ys.is_null()) {
        return fail(DcStatus::NullPointer, "coordinate arrays are null");
    }
    let points = (0..len)
        .map(|i| Point::new(*xs.add(i), *ys.add(i)))
        .collect();
    match PointAnnotationSet::new(image_id, width, height, points) {
        Ok(set) => {
            *out = Box::into_raw(Box::new(DcAnnotations(set)));
            DcStatus::Ok
        }
        Err(err) => fail_density(err),
    }
}

/// Loads one image's annotations from an annotation file by id.
#[no_mangle]
pub unsafe extern "C" fn dc_annotations_load(
    path: *const c_char,
    image_id: *const c_char,
    out: *mut *mut DcAnnotations,
) -> DcStatus {
    let out = match out_arg(out, "out") {
        Ok(out) => out,
        Err(status) => return status,
    };
    *out = ptr::null_mut();
    let path = match str_arg(path, "path") {
        Ok(s) => PathBuf::from(s),
        Err(status) => return status,
    };
    let image_id = match str_arg(image_id, "image_id") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let images = match dataset::load_annotations(&path) {
        Ok(images) => images,
        Err(err) => {
            let status = match &err {
                dataset::DatasetError::Io { .. } => DcStatus::Io,
                dataset::DatasetError::Parse { .. } => DcStatus::Parse,
                _ => DcStatus::Validation,
            };
            return fail(status, err.to_string());
        }
    };
    match images
        .into_iter()
        .find(|img| img.annotations.image_id() == image_id)
    {
        Some(img) => {
            *out = Box::into_raw(Box::new(DcAnnotations(img.annotations)));
            DcStatus::Ok
        }
        None => fail(
            DcStatus::InvalidArgument,
            format!("no image {image_id:?} in {}", path.display()),
        ),
    }
}

#[no_mangle]
pub unsafe extern "C" fn dc_annotations_len(anns: *const DcAnnotations) -> usize {
    if anns.is_null() {
        return 0;
    }
    (*anns).0.len()
}

#[no_mangle]
pub unsafe extern "C" fn dc_annotations_free(anns: *mut DcAnnotations) {
    if !anns.is_null() {
        drop(Box::from_raw(anns));
    }
}

// ---------------------------------------------------------------------------
// Density maps
// ---------------------------------------------------------------------------

/// Opaque non-negative density grid.
pub struct DcDensityMap(DensityMap);

fn map_out(out: &mut *mut DcDensityMap, map: DensityMap) -> DcStatus {
    *out = Box::into_raw(Box::new(DcDensityMap(map)));
    DcStatus::Ok
}

/// Ground truth with one fixed-bandwidth unit-mass kernel per point.
#[no_mangle]
pub unsafe extern "C" fn dc_density_generate_fixed(
    anns: *const DcAnnotations,
    sigma: f64,
    truncation_radius: f64,
    out: *mut *mut DcDensityMap,
) -> DcStatus {
    let out = match out_arg(out, "out") {
        Ok(out) => out,
        Err(status) => return status,
    };
    *out = ptr::null_mut();
    if anns.is_null() {
        return fail(DcStatus::NullPointer, "annotations handle is null");
    }
    let spec = match KernelSpec::fixed(sigma).and_then(|s| s.with_truncation(truncation_radius)) {
        Ok(spec) => spec,
        Err(err) => return fail_density(err),
    };
    match density::generate_density_map(&(*anns).0, &spec) {
        Ok(map) => map_out(out, map),
        Err(err) => fail_density(err),
    }
}

/// Ground truth with geometry-adaptive bandwidths
/// (`sigma_i = beta * mean distance to the k nearest other points`).
#[no_mangle]
pub unsafe extern "C" fn dc_density_generate_adaptive(
    anns: *const DcAnnotations,
    k: usize,
    beta: f64,
    fallback_sigma: f64,
    truncation_radius: f64,
    out: *mut *mut DcDensityMap,
) -> DcStatus {
    let out = match out_arg(out, "out") {
        Ok(out) => out,
        Err(status) => return status,
    };
    *out = ptr::null_mut();
    if anns.is_null() {
        return fail(DcStatus::NullPointer, "annotations handle is null");
    }
    let spec = match KernelSpec::adaptive(k, beta, fallback_sigma)
        .and_then(|s| s.with_truncation(truncation_radius))
    {
        Ok(spec) => spec,
        Err(err) => return fail_density(err),
    };
    match density::generate_density_map(&(*anns).0, &spec) {
        Ok(map) => map_out(out, map),
        Err(err) => fail_density(err),
    }
}

#[no_mangle]
pub unsafe extern "C" fn dc_density_rows(map: *const DcDensityMap) -> u32 {
    if map.is_null() {
        return 0;
    }
    (*map).0.rows() as u32
}

#[no_mangle]
pub unsafe extern "C" fn dc_density_cols(map: *const DcDensityMap) -> u32 {
    if map.is_null() {
        return 0;
    }
    (*map).0.cols() as u32
}

/// Cells per source pixel; 0 on a null handle.
#[no_mangle]
pub unsafe extern "C" fn dc_density_scale(map: *const DcDensityMap) -> f64 {
    if map.is_null() {
        return 0.0;
    }
    (*map).0.scale()
}

/// Copies the row-major cell values into `buffer` (`buffer_len` must be
/// exactly rows * cols).
#[no_mangle]
pub unsafe extern "C" fn dc_density_copy_values(
    map: *const DcDensityMap,
    buffer: *mut f64,
    buffer_len: usize,
) -> DcStatus {
    if map.is_null() || buffer.is_null() {
        return fail(DcStatus::NullPointer, "map or buffer is null");
    }
    let values = (*map).0.values();
    if buffer_len != values.len() {
        return fail(
            DcStatus::InvalidArgument,
            format!("buffer holds {buffer_len} cells, the grid has {}", values.len()),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buffer, values.len());
    DcStatus::Ok
}

/// Sum of all cells: the count this grid encodes.
#[no_mangle]
pub unsafe extern "C" fn dc_density_integrate(
    map: *const DcDensityMap,
    out: *mut f64,
) -> DcStatus {
    let out = match out_arg(out, "out") {
        Ok(out) => out,
        Err(status) => return status,
    };
    if map.is_null() {
        return fail(DcStatus::NullPointer, "map handle is null");
    }
    *out = (*map).0.integrate();
    DcStatus::Ok
}

/// Sum-pools factor x factor blocks; mass is conserved.
#[no_mangle]
pub unsafe extern "C" fn dc_density_downsample(
    map: *const DcDensityMap,
    factor: u32,
    out: *mut *mut DcDensityMap,
) -> DcStatus {
    let out = match out_arg(out, "out") {
        Ok(out) => out,
        Err(status) => return status,
    };
    *out = ptr::null_mut();
    if map.is_null() {
        return fail(DcStatus::NullPointer, "map handle is null");
    }
    match density::downsample(&(*map).0, factor as usize) {
        Ok(map) => map_out(out, map),
        Err(err) => fail_density(err),
    }
}

/// Writes the grid as a DGRD file (see the densecount README for the
/// byte layout).
#[no_mangle]
pub unsafe extern "C" fn dc_density_write_dgrd(
    map: *const DcDensityMap,
    path: *const c_char,
) -> DcStatus {
    if map.is_null() {
        return fail(DcStatus::NullPointer, "map handle is null");
    }
    let path = match str_arg(path, "path") {
        Ok(s) => PathBuf::from(s),
        Err(status) => return status,
    };
    match dgrd::write(&(*map).0, &path) {
        Ok(()) => DcStatus::Ok,
        Err(err) => fail_dgrd(err),
    }
}

/// Reads a DGRD file into a new grid handle.
#[no_mangle]
pub unsafe extern "C" fn dc_density_read_dgrd(
    path: *const c_char,
    out: *mut *mut DcDensityMap,
) -> DcStatus {
    let out = match out_arg(out, "out") {
        Ok(out) => out,
        Err(status) => return status,
    };
    *out = ptr::null_mut();
    let path = match str_arg(path, "path") {
        Ok(s) => PathBuf::from(s),
        Err(status) => return status,
    };
    match dgrd::read(&path) {
        Ok(map) => map_out(out, map),
        Err(err) => fail_dgrd(err),
    }
}

#[no_mangle]
pub unsafe extern "C" fn dc_density_free(map: *mut DcDensityMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

unsafe fn pairs_from_arrays(
    predicted: *const f64,
    ground_truth: *const f64,
    len: usize,
) -> Result<Vec<CountPair>, DcStatus> {
    if len == 0 {
        return Err(fail(DcStatus::InvalidArgument, "need at least one pair"));
    }
    if predicted.is_null() || ground_truth.is_null() {
        return Err(fail(DcStatus::NullPointer, "count arrays are null"));
    }
    Ok((0..len)
        .map(|i| CountPair::new(i.to_string(), *predicted.add(i), *ground_truth.add(i)))
        .collect())
}

macro_rules! metric_fn {
    ($(#[$doc:meta])* $name:ident, $metric:path) => {
        $(#[$doc])*
        #[no_mangle]
        pub unsafe extern "C" fn $name(
            predicted: *const f64,
            ground_truth: *const f64,
            len: usize,
            out: *mut f64,
        ) -> DcStatus {
            let out = match out_arg(out, "out") {
                Ok(out) => out,
                Err(status) => return status,
            };
            let pairs = match pairs_from_arrays(predicted, ground_truth, len) {
                Ok(pairs) => pairs,
                Err(status) => return status,
            };
            match $metric(&pairs) {
                Ok(value) => {
                    *out = value;
                    DcStatus::Ok
                }
                Err(err) => fail(DcStatus::InvalidArgument, err.to_string()),
            }
        }
    };
}

metric_fn!(
    /// Mean absolute per-image count error.
    dc_mae,
    metrics::mae
);
metric_fn!(
    /// Root-mean-square per-image count error.
    dc_mse,
    metrics::mse
);
metric_fn!(
    /// Absolute difference of summed predictions and summed truths.
    dc_overall_mae,
    metrics::overall_mae
);

// ---------------------------------------------------------------------------
// Yield models
// ---------------------------------------------------------------------------

/// Cluster-weight yield model: vines/unit x bunches/vine x bunch grams.
#[no_mangle]
pub extern "C" fn dc_yield_eq1(vines_per_unit: f64, bunches_per_vine: f64, bunch_weight_g: f64) -> f64 {
    yield_model::yield_eq1(vines_per_unit, bunches_per_vine, bunch_weight_g)
}

/// Berry-count yield model: vines/unit x bunches/vine x berries/bunch x
/// berry grams.
#[no_mangle]
pub extern "C" fn dc_yield_eq2(
    vines_per_unit: f64,
    bunches_per_vine: f64,
    berries_per_bunch: f64,
    berry_weight_g: f64,
) -> f64 {
    yield_model::yield_eq2(vines_per_unit, bunches_per_vine, berries_per_bunch, berry_weight_g)
}

/// Panoramic yield: field-level berry count x berry grams.
#[no_mangle]
pub extern "C" fn dc_yield_panoramic(total_berries: f64, berry_weight_g: f64) -> f64 {
    yield_model::yield_panoramic(total_berries, berry_weight_g)
}

/// Relative spread of a weight series: mean absolute deviation from the
/// mean over the median. `len` must be positive and every value finite
/// and positive.
#[no_mangle]
pub unsafe extern "C" fn dc_pct_mean_deviation(
    values: *const f64,
    len: usize,
    out: *mut f64,
) -> DcStatus {
    let out = match out_arg(out, "out") {
        Ok(out) => out,
        Err(status) => return status,
    };
    if values.is_null() {
        return fail(DcStatus::NullPointer, "values array is null");
    }
    if len == 0 {
        return fail(DcStatus::InvalidArgument, "series has no values");
    }
    let series = yield_model::HistoricalSeries {
        variety: String::new(),
        values: (0..len)
            .map(|i| {
                let v = *values.add(i);
                (i as i32, Some(v))
            })
            .collect(),
    };
    for value in series.present_values() {
        if !(value > 0.0 && value.is_finite()) {
            return fail(
                DcStatus::InvalidArgument,
                format!("weight {value} must be positive"),
            );
        }
    }
    match yield_model::pct_mean_deviation(&series) {
        Ok(value) => {
            *out = value;
            DcStatus::Ok
        }
        Err(err) => fail(DcStatus::InvalidArgument, err.to_string()),
    }
}
