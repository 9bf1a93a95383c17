//! C ABI for poikit.
//!
//! Every fallible function returns a [`PoiStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and
//! can be read with [`poi_last_error_message`]. Objects are opaque handles
//! released with the matching `_free` function; freeing NULL is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use poikit::error::ErrorClass;
use poikit::glm::LinkSpec;
use poikit::poi::{estimate_poi, PoiConfig};
use poikit::selection::{best_subset_over_delta, default_k_grid, SelectionLimits, SelectionResult};
use poikit::sim::{generate_responses, sample_process, Dgp, SamplingMethod};
use poikit::{FunctionalDataset, GridSpec, PoiError};

/// Status codes; 2 to 4 agree with the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoiStatus {
    Ok = 0,
    /// NULL pointer, bad UTF-8 or a too-small output buffer.
    InvalidArgument = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

/// Curves on an equidistant grid plus responses.
pub struct PoiDataset(FunctionalDataset);

/// Result of the threshold detector.
pub struct PoiEstimate(poikit::poi::PoiEstimate);

/// Result of the BIC search over candidate subsets and lags.
pub struct PoiSelection(SelectionResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Arg(String),
    Lib(PoiError),
}

impl From<PoiError> for Failure {
    fn from(e: PoiError) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PoiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PoiStatus::Ok,
        Ok(Err(Failure::Arg(msg))) => {
            set_last_error(msg);
            PoiStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            match e.class() {
                ErrorClass::Config => PoiStatus::Config,
                ErrorClass::Data => PoiStatus::Data,
                ErrorClass::Numerical => PoiStatus::Numerical,
            }
        }
        Err(_) => {
            set_last_error("internal panic".into());
            PoiStatus::Internal
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: caller contract, checked for NULL here
    unsafe { p.as_ref() }.ok_or_else(|| Failure::Arg(format!("{name} is NULL")))
}

fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: caller contract, checked for NULL here
    unsafe { p.as_mut() }.ok_or_else(|| Failure::Arg(format!("{name} is NULL")))
}

fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Arg(format!("{name} is NULL")));
    }
    // SAFETY: caller guarantees `len` readable elements
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn opt_str<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    // SAFETY: caller guarantees a NUL-terminated string
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map(Some)
        .map_err(|_| Failure::Arg(format!("{name} is not UTF-8")))
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(text: Option<&str>) -> Result<T, Failure> {
    match text {
        None => Ok(T::default()),
        Some(t) => serde_json::from_str(t).map_err(|e| Failure::Lib(PoiError::Config(e.to_string()))),
    }
}

/// Copies `src` into `dst[..cap]`; `written` gets `src.len()` even when
/// `cap` is too small, so callers can size a second attempt.
fn copy_out<T: Copy>(src: &[T], dst: *mut T, cap: usize, written: *mut usize) -> Result<(), Failure> {
    *out_ptr(written, "written")? = src.len();
    if src.len() > cap {
        return Err(Failure::Arg(format!("buffer holds {cap}, need {}", src.len())));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(Failure::Arg("output buffer is NULL".into()));
        }
        // SAFETY: dst has room for cap >= src.len() elements
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len()) };
    }
    Ok(())
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn poi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn poi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset from `n x p` curves in row-major order and `n` responses
/// on an equidistant grid over `[a, b]`.
///
/// # Safety
/// `curves` must point to `n * p` doubles and `responses` to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn poi_dataset_new(
    curves: *const f64,
    responses: *const f64,
    n: usize,
    p: usize,
    a: f64,
    b: f64,
    out: *mut *mut PoiDataset,
) -> PoiStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let len = n.checked_mul(p).ok_or_else(|| Failure::Arg("n * p overflows".into()))?;
        let x = slice(curves, len, "curves")?;
        let y = slice(responses, n, "responses")?;
        let grid = GridSpec::new(a, b, p)?;
        let data = FunctionalDataset::new(grid, DMatrix::from_row_slice(n, p, x), DVector::from_column_slice(y))?;
        *out = Box::into_raw(Box::new(PoiDataset(data)));
        Ok(())
    })
}

/// Draws `n` curves on `p` points of `[0, 1]` with responses from one of the
/// built-in designs, named "DGP1" to "DGP5".
///
/// # Safety
/// `dgp` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn poi_dataset_simulate(dgp: *const c_char, n: usize, p: usize, seed: u64, out: *mut *mut PoiDataset) -> PoiStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let name = opt_str(dgp, "dgp")?.ok_or_else(|| Failure::Arg("dgp is NULL".into()))?;
        let dgp: Dgp = serde_json::from_value(serde_json::Value::String(name.to_uppercase()))
            .map_err(|_| Failure::Lib(PoiError::Config(format!("unknown design {name:?}"))))?;
        let grid = GridSpec::unit(p)?;
        let x = sample_process(&dgp.process(), &grid, n, seed, SamplingMethod::Auto)?;
        let sim = generate_responses(&x, &grid, &dgp.model(), seed)?;
        *out = Box::into_raw(Box::new(PoiDataset(FunctionalDataset::new(grid, x, sim.y)?)));
        Ok(())
    })
}

/// # Safety
/// `data` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn poi_dataset_free(data: *mut PoiDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// # Safety
/// `data` must be a live handle; `n` and `p` writable.
#[no_mangle]
pub unsafe extern "C" fn poi_dataset_shape(data: *const PoiDataset, n: *mut usize, p: *mut usize) -> PoiStatus {
    guard(|| {
        let d = &non_null(data, "data")?.0;
        *out_ptr(n, "n")? = d.n();
        *out_ptr(p, "p")? = d.p();
        Ok(())
    })
}

/// Runs the threshold detector. `config_json` holds detector settings
/// (`delta`, `threshold_a`, `difference_order`, `max_candidates`, `center`)
/// or is NULL for the defaults.
///
/// # Safety
/// `data` must be a live handle; `config_json` NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn poi_estimate(data: *const PoiDataset, config_json: *const c_char, out: *mut *mut PoiEstimate) -> PoiStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let d = &non_null(data, "data")?.0;
        let cfg: PoiConfig = parse_json(opt_str(config_json, "config_json")?)?;
        *out = Box::into_raw(Box::new(PoiEstimate(estimate_poi(d, &cfg)?)));
        Ok(())
    })
}

/// # Safety
/// `est` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn poi_estimate_free(est: *mut PoiEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

fn estimate_ref<'a>(est: *const PoiEstimate) -> Result<&'a poikit::poi::PoiEstimate, Failure> {
    Ok(&non_null(est, "est")?.0)
}

/// Number of selected points, the lag `delta` and the threshold `lambda`.
///
/// # Safety
/// `est` must be a live handle; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn poi_estimate_summary(est: *const PoiEstimate, s_hat: *mut usize, delta: *mut f64, lambda: *mut f64) -> PoiStatus {
    guard(|| {
        let e: &poikit::poi::PoiEstimate = estimate_ref(est)?;
        *out_ptr(s_hat, "s_hat")? = e.s_hat;
        *out_ptr(delta, "delta")? = e.delta;
        *out_ptr(lambda, "lambda")? = e.lambda;
        Ok(())
    })
}

/// Grid indices (0-based) and locations of the selected points, in
/// extraction order. Either buffer may be NULL when `cap` is 0.
///
/// # Safety
/// Buffers must hold `cap` elements; `written` writable.
#[no_mangle]
pub unsafe extern "C" fn poi_estimate_selected(
    est: *const PoiEstimate,
    indices: *mut usize,
    locations: *mut f64,
    cap: usize,
    written: *mut usize,
) -> PoiStatus {
    guard(|| {
        let e: &poikit::poi::PoiEstimate = estimate_ref(est)?;
        let sel = e.selected();
        let idx: Vec<usize> = sel.iter().map(|c| c.index).collect();
        let loc: Vec<f64> = sel.iter().map(|c| c.location).collect();
        copy_out(&idx, indices, cap, written)?;
        copy_out(&loc, locations, cap, written)
    })
}

/// All candidates' locations in extraction order.
///
/// # Safety
/// `locations` must hold `cap` doubles; `written` writable.
#[no_mangle]
pub unsafe extern "C" fn poi_estimate_candidates(est: *const PoiEstimate, locations: *mut f64, cap: usize, written: *mut usize) -> PoiStatus {
    guard(|| {
        let e: &poikit::poi::PoiEstimate = estimate_ref(est)?;
        let loc: Vec<f64> = e.candidates.iter().map(|c| c.location).collect();
        copy_out(&loc, locations, cap, written)
    })
}

/// BIC best-subset search. `k_grid` may be NULL (with `k_len` 0) for the
/// default lag grid; `limits_json` may be NULL for default limits. `link`
/// is 0 for logit and 1 for identity.
///
/// # Safety
/// `data` must be a live handle; `k_grid` must hold `k_len` elements.
#[no_mangle]
pub unsafe extern "C" fn poi_select(
    data: *const PoiDataset,
    k_grid: *const usize,
    k_len: usize,
    link: u32,
    limits_json: *const c_char,
    out: *mut *mut PoiSelection,
) -> PoiStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let d = &non_null(data, "data")?.0;
        let link = match link {
            0 => LinkSpec::Logit,
            1 => LinkSpec::Identity,
            other => return Err(Failure::Lib(PoiError::Config(format!("unknown link {other}")))),
        };
        let limits: SelectionLimits = parse_json(opt_str(limits_json, "limits_json")?)?;
        let detector = PoiConfig::default();
        let ks = match slice(k_grid, k_len, "k_grid")? {
            [] => default_k_grid(&d.grid, detector.difference_order),
            ks => ks.to_vec(),
        };
        let res = best_subset_over_delta(d, &ks, link, &limits, &detector)?;
        *out = Box::into_raw(Box::new(PoiSelection(res)));
        Ok(())
    })
}

/// # Safety
/// `sel` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn poi_selection_free(sel: *mut PoiSelection) {
    if !sel.is_null() {
        drop(Box::from_raw(sel));
    }
}

/// Number of selected points, chosen lag and BIC of the winning model.
///
/// # Safety
/// `sel` must be a live handle; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn poi_selection_summary(sel: *const PoiSelection, s_hat: *mut usize, delta: *mut f64, bic: *mut f64) -> PoiStatus {
    guard(|| {
        let r = &non_null(sel, "sel")?.0;
        *out_ptr(s_hat, "s_hat")? = r.s_hat();
        *out_ptr(delta, "delta")? = r.best_delta;
        *out_ptr(bic, "bic")? = r.fit.bic;
        Ok(())
    })
}

/// Selected grid indices and locations, ascending.
///
/// # Safety
/// Buffers must hold `cap` elements; `written` writable.
#[no_mangle]
pub unsafe extern "C" fn poi_selection_selected(
    sel: *const PoiSelection,
    indices: *mut usize,
    locations: *mut f64,
    cap: usize,
    written: *mut usize,
) -> PoiStatus {
    guard(|| {
        let r = &non_null(sel, "sel")?.0;
        copy_out(&r.selected_indices, indices, cap, written)?;
        copy_out(&r.selected_locations, locations, cap, written)
    })
}

/// Coefficients of the winning model, intercept first.
///
/// # Safety
/// `beta` must hold `cap` doubles; `written` writable.
#[no_mangle]
pub unsafe extern "C" fn poi_selection_coefficients(sel: *const PoiSelection, beta: *mut f64, cap: usize, written: *mut usize) -> PoiStatus {
    guard(|| {
        let r = &non_null(sel, "sel")?.0;
        copy_out(&r.fit.beta, beta, cap, written)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        let s = guard(|| Err(PoiError::Config("x".into()).into()));
        assert_eq!(s, PoiStatus::Config);
        let s = guard(|| Err(PoiError::Numerical("x".into()).into()));
        assert_eq!(s, PoiStatus::Numerical);
        let s = guard(|| panic!("boom"));
        assert_eq!(s, PoiStatus::Internal);
    }

    #[test]
    fn copy_out_reports_needed_size() {
        let mut buf = [0.0; 1];
        let mut written = 0;
        assert!(copy_out(&[1.0, 2.0], buf.as_mut_ptr(), 1, &mut written).is_err());
        assert_eq!(written, 2);
        assert!(copy_out(&[3.0], buf.as_mut_ptr(), 1, &mut written).is_ok());
        assert_eq!(buf[0], 3.0);
    }
}
