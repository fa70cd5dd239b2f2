//! C ABI for the dataset-construction core. Every function returns an
//! `EsStatus`; results come back through out-parameters. Handles are opaque
//! and must be released with their matching `_free` function. The last error
//! message is kept per thread and readable via `es_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ecosampler::eval::tasks::kl_divergence;
use ecosampler::geogrid::{generate_grid, haversine_km, row_count, row_point_count, GeoPoint, GridSpec};
use ecosampler::manifest::{read_manifest, DatasetManifest};
use ecosampler::phenology::{
    detect_transitions, season_windows, EviCurve, PhenoConfig, PhenoDates, SeasonMode,
};
use ecosampler::raster::Raster;
use ecosampler::sampler::{location_weight, LocationAttributes, WeightPolicy};
use ecosampler::Error;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsStatus {
    EsOk = 0,
    /// a required pointer argument was null
    EsNullArgument = 1,
    /// invalid argument or state
    EsInvalid = 2,
    /// file could not be read or written
    EsIo = 3,
    /// input file was syntactically malformed
    EsDecode = 4,
    /// data violated a documented rule
    EsValidation = 5,
    /// internal panic; state may be inconsistent
    EsPanic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.to_string());
}

fn status_of(err: &Error) -> EsStatus {
    match err {
        Error::Io { .. } | Error::Transport(_) => EsStatus::EsIo,
        Error::Decode { .. } => EsStatus::EsDecode,
        Error::Validation { .. } => EsStatus::EsValidation,
        Error::Stage { source, .. } => status_of(source),
        _ => EsStatus::EsInvalid,
    }
}

fn fail(err: Error) -> EsStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

fn guard(f: impl FnOnce() -> EsStatus) -> EsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            EsStatus::EsPanic
        }
    }
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn es_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, EsStatus> {
    if path.is_null() {
        set_error("path is null");
        return Err(EsStatus::EsNullArgument);
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(EsStatus::EsInvalid)
        }
    }
}

// ---------------------------------------------------------------------------
// grid

/// Opaque grid handle: a spacing spec plus the generated points, if any.
pub struct EsGrid {
    spec: GridSpec,
    points: Vec<GeoPoint>,
}

/// Creates a grid spec handle. `spacing_km <= 0` is rejected.
#[no_mangle]
pub extern "C" fn es_grid_new(spacing_km: f64, out: *mut *mut EsGrid) -> EsStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return EsStatus::EsNullArgument;
        }
        let spec = GridSpec { spacing_km, ..GridSpec::default() };
        if let Err(e) = spec.validate() {
            return fail(e);
        }
        let grid = Box::new(EsGrid { spec, points: Vec::new() });
        unsafe { *out = Box::into_raw(grid) };
        EsStatus::EsOk
    })
}

/// Releases a grid handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn es_grid_free(grid: *mut EsGrid) {
    if !grid.is_null() {
        drop(unsafe { Box::from_raw(grid) });
    }
}

/// Number of latitude rows for the grid spacing.
#[no_mangle]
pub extern "C" fn es_grid_row_count(grid: *const EsGrid, out: *mut usize) -> EsStatus {
    guard(|| {
        if grid.is_null() || out.is_null() {
            set_error("grid or out is null");
            return EsStatus::EsNullArgument;
        }
        unsafe { *out = row_count(&(*grid).spec) };
        EsStatus::EsOk
    })
}

/// Number of candidate points in the row at `lat` degrees.
#[no_mangle]
pub extern "C" fn es_grid_row_point_count(
    grid: *const EsGrid,
    lat: f64,
    out: *mut usize,
) -> EsStatus {
    guard(|| {
        if grid.is_null() || out.is_null() {
            set_error("grid or out is null");
            return EsStatus::EsNullArgument;
        }
        if !(-90.0..=90.0).contains(&lat) {
            set_error("latitude out of [-90, 90]");
            return EsStatus::EsInvalid;
        }
        unsafe { *out = row_point_count(&(*grid).spec, lat) };
        EsStatus::EsOk
    })
}

/// Generates grid points over the land-mask raster stem (`<stem>.json` +
/// `<stem>.bin`); the points stay inside the handle.
#[no_mangle]
pub unsafe extern "C" fn es_grid_generate(grid: *mut EsGrid, mask_path: *const c_char) -> EsStatus {
    guard(|| {
        if grid.is_null() {
            set_error("grid is null");
            return EsStatus::EsNullArgument;
        }
        let path = match path_arg(mask_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let mask = match Raster::read(path) {
            Ok(m) => m,
            Err(e) => return fail(e),
        };
        match generate_grid(&(*grid).spec, &mask) {
            Ok(points) => {
                (*grid).points = points;
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of generated points in the handle.
#[no_mangle]
pub extern "C" fn es_grid_point_count(grid: *const EsGrid, out: *mut usize) -> EsStatus {
    guard(|| {
        if grid.is_null() || out.is_null() {
            set_error("grid or out is null");
            return EsStatus::EsNullArgument;
        }
        unsafe { *out = (*grid).points.len() };
        EsStatus::EsOk
    })
}

/// Fetches point `index` as (id, lat, lon).
#[no_mangle]
pub extern "C" fn es_grid_point(
    grid: *const EsGrid,
    index: usize,
    out_id: *mut u64,
    out_lat: *mut f64,
    out_lon: *mut f64,
) -> EsStatus {
    guard(|| {
        if grid.is_null() || out_id.is_null() || out_lat.is_null() || out_lon.is_null() {
            set_error("null argument");
            return EsStatus::EsNullArgument;
        }
        let points = unsafe { &(*grid).points };
        match points.get(index) {
            Some(p) => {
                unsafe {
                    *out_id = p.id;
                    *out_lat = p.lat;
                    *out_lon = p.lon;
                }
                EsStatus::EsOk
            }
            None => {
                set_error("point index out of range");
                EsStatus::EsInvalid
            }
        }
    })
}

/// Great-circle distance in km between two (lat, lon) pairs.
#[no_mangle]
pub extern "C" fn es_haversine_km(
    lat1: f64,
    lon1: f64,
    lat2: f64,
    lon2: f64,
    out: *mut f64,
) -> EsStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return EsStatus::EsNullArgument;
        }
        let a = GeoPoint { id: 0, lat: lat1, lon: lon1 };
        let b = GeoPoint { id: 1, lat: lat2, lon: lon2 };
        unsafe { *out = haversine_km(&a, &b, GridSpec::default().earth_radius_km) };
        EsStatus::EsOk
    })
}

// ---------------------------------------------------------------------------
// phenology

/// Day-of-year value used for an absent transition.
pub const ES_DAY_MISSING: i32 = -1;

/// Detects the four transition days from a daily EVI curve. `values` holds
/// `len` daily values for `year`; NaN marks missing days. Outputs are 1-based
/// days or `ES_DAY_MISSING`.
#[no_mangle]
pub unsafe extern "C" fn es_detect_transitions(
    year: i32,
    values: *const f64,
    len: usize,
    low_fraction: f64,
    high_fraction: f64,
    out_days: *mut i32,
) -> EsStatus {
    guard(|| {
        if values.is_null() || out_days.is_null() {
            set_error("values or out_days is null");
            return EsStatus::EsNullArgument;
        }
        let slice = std::slice::from_raw_parts(values, len);
        let curve = match EviCurve::new(year, slice.to_vec()) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let cfg = PhenoConfig { low_fraction, high_fraction };
        if let Err(e) = cfg.validate() {
            return fail(e);
        }
        match detect_transitions(&curve, &cfg) {
            Ok(dates) => {
                let days = [dates.greenup, dates.maturity, dates.senescence, dates.dormancy];
                for (i, d) in days.iter().enumerate() {
                    *out_days.add(i) = d.map(|v| v as i32).unwrap_or(ES_DAY_MISSING);
                }
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Season derivation from transition days (phenological mode when
/// `calendar_mode` is 0). Arrays hold spring, summer, autumn, winter.
/// `out_fallback` is set to 1 when degenerate ordering forced calendar mode.
#[no_mangle]
pub unsafe extern "C" fn es_season_windows(
    greenup: i32,
    maturity: i32,
    senescence: i32,
    dormancy: i32,
    year_length: u32,
    calendar_mode: i32,
    out_start: *mut u32,
    out_length: *mut u32,
    out_target: *mut u32,
    out_fallback: *mut i32,
) -> EsStatus {
    guard(|| {
        if out_start.is_null() || out_length.is_null() || out_target.is_null()
            || out_fallback.is_null()
        {
            set_error("null output argument");
            return EsStatus::EsNullArgument;
        }
        let day = |d: i32| if d == ES_DAY_MISSING { None } else { Some(d as u32) };
        let dates = PhenoDates {
            greenup: day(greenup),
            maturity: day(maturity),
            senescence: day(senescence),
            dormancy: day(dormancy),
        };
        let mode = if calendar_mode != 0 { SeasonMode::Calendar } else { SeasonMode::Phenological };
        match season_windows(&dates, mode, year_length) {
            Ok(w) => {
                for (i, win) in w.windows.iter().enumerate() {
                    *out_start.add(i) = win.start_day;
                    *out_length.add(i) = win.length;
                    *out_target.add(i) = win.target_day;
                }
                *out_fallback = w.fallback as i32;
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// sampling weights

/// Pretraining weight for a location. `ndvi` holds 4 seasonal means with NaN
/// for missing seasons; `is_mountain` is 0 or 1.
#[no_mangle]
pub unsafe extern "C" fn es_location_weight(
    ndvi: *const f64,
    is_mountain: i32,
    out_weight: *mut f64,
) -> EsStatus {
    guard(|| {
        if ndvi.is_null() || out_weight.is_null() {
            set_error("ndvi or out_weight is null");
            return EsStatus::EsNullArgument;
        }
        let vals = std::slice::from_raw_parts(ndvi, 4);
        let mut seasonal = [None; 4];
        for (slot, v) in seasonal.iter_mut().zip(vals) {
            if !v.is_nan() {
                *slot = Some(*v);
            }
        }
        let attrs = LocationAttributes {
            point_id: 0,
            mean_ndvi_per_season: seasonal,
            is_mountain: is_mountain != 0,
        };
        match location_weight(&attrs, &WeightPolicy::default()) {
            Ok((w, _)) => {
                *out_weight = w;
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// evaluation helpers

/// Kullback-Leibler divergence between two length-`len` distributions.
#[no_mangle]
pub unsafe extern "C" fn es_kl_divergence(
    p: *const f64,
    q: *const f64,
    len: usize,
    out: *mut f64,
) -> EsStatus {
    guard(|| {
        if p.is_null() || q.is_null() || out.is_null() {
            set_error("null argument");
            return EsStatus::EsNullArgument;
        }
        let ps = std::slice::from_raw_parts(p, len);
        let qs = std::slice::from_raw_parts(q, len);
        match kl_divergence(ps, qs) {
            Ok(v) => {
                *out = v;
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// manifest

/// Opaque handle over a loaded dataset manifest.
pub struct EsManifest {
    inner: DatasetManifest,
}

/// Loads a JSON-lines manifest from `path`.
#[no_mangle]
pub unsafe extern "C" fn es_manifest_open(
    path: *const c_char,
    out: *mut *mut EsManifest,
) -> EsStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return EsStatus::EsNullArgument;
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_manifest(path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(EsManifest { inner }));
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a manifest handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn es_manifest_free(m: *mut EsManifest) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Number of location records in the manifest.
#[no_mangle]
pub extern "C" fn es_manifest_len(m: *const EsManifest, out: *mut usize) -> EsStatus {
    guard(|| {
        if m.is_null() || out.is_null() {
            set_error("manifest or out is null");
            return EsStatus::EsNullArgument;
        }
        unsafe { *out = (*m).inner.records.len() };
        EsStatus::EsOk
    })
}

/// Runs the full manifest validity check.
#[no_mangle]
pub extern "C" fn es_manifest_validate(m: *const EsManifest) -> EsStatus {
    guard(|| {
        if m.is_null() {
            set_error("manifest is null");
            return EsStatus::EsNullArgument;
        }
        match unsafe { &(*m).inner }.validate() {
            Ok(()) => EsStatus::EsOk,
            Err(e) => fail(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    #[test]
    fn grid_counts_through_ffi() {
        let mut grid: *mut EsGrid = ptr::null_mut();
        assert_eq!(es_grid_new(23.0, &mut grid), EsStatus::EsOk);
        let mut rows = 0usize;
        assert_eq!(es_grid_row_count(grid, &mut rows), EsStatus::EsOk);
        assert_eq!(rows, 870);
        let mut n = 0usize;
        assert_eq!(es_grid_row_point_count(grid, 0.0, &mut n), EsStatus::EsOk);
        assert_eq!(n, 1740);
        es_grid_free(grid);
    }

    #[test]
    fn null_arguments_are_rejected() {
        assert_eq!(es_grid_new(23.0, ptr::null_mut()), EsStatus::EsNullArgument);
        assert_eq!(es_haversine_km(0.0, 0.0, 0.0, 0.0, ptr::null_mut()), EsStatus::EsNullArgument);
        let mut msg = vec![0i8; 64];
        let n = unsafe { es_last_error_message(msg.as_mut_ptr(), msg.len()) };
        assert!(n > 0);
    }

    #[test]
    fn invalid_spacing_reports_error() {
        let mut grid: *mut EsGrid = ptr::null_mut();
        assert_eq!(es_grid_new(-1.0, &mut grid), EsStatus::EsInvalid);
        assert!(grid.is_null());
    }

    #[test]
    fn transitions_and_windows_round_trip() {
        // triangular curve rising to day 200 then falling
        let values: Vec<f64> = (0..365)
            .map(|i| {
                let d = (i + 1) as f64;
                if d <= 200.0 { d / 200.0 } else { (365.0 - d) / 165.0 }
            })
            .collect();
        let mut days = [0i32; 4];
        let status = unsafe {
            es_detect_transitions(2021, values.as_ptr(), values.len(), 0.15, 0.90, days.as_mut_ptr())
        };
        assert_eq!(status, EsStatus::EsOk);
        assert!(days.iter().all(|d| *d != ES_DAY_MISSING));

        let (mut start, mut length, mut target) = ([0u32; 4], [0u32; 4], [0u32; 4]);
        let mut fallback = 0i32;
        let status = unsafe {
            es_season_windows(
                days[0], days[1], days[2], days[3], 365, 0,
                start.as_mut_ptr(), length.as_mut_ptr(), target.as_mut_ptr(), &mut fallback,
            )
        };
        assert_eq!(status, EsStatus::EsOk);
        assert_eq!(length.iter().sum::<u32>(), 365);
        assert_eq!(fallback, 0);
    }

    #[test]
    fn weight_through_ffi() {
        let ndvi = [0.05, 0.02, 0.0, 0.09];
        let mut w = 0.0;
        let status = unsafe { es_location_weight(ndvi.as_ptr(), 1, &mut w) };
        assert_eq!(status, EsStatus::EsOk);
        assert_eq!(w, 0.5); // divided by 4, doubled for mountain
    }

    #[test]
    fn kl_through_ffi() {
        let p = [1.0, 0.0];
        let q = [0.5, 0.5];
        let mut v = 0.0;
        let status = unsafe { es_kl_divergence(p.as_ptr(), q.as_ptr(), 2, &mut v) };
        assert_eq!(status, EsStatus::EsOk);
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn manifest_open_missing_file() {
        let path = CString::new("/no/such/manifest.jsonl").unwrap();
        let mut m: *mut EsManifest = ptr::null_mut();
        let status = unsafe { es_manifest_open(path.as_ptr(), &mut m) };
        assert_eq!(status, EsStatus::EsIo);
        assert!(m.is_null());
    }
}
