//! C ABI over `sdde-lan`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_from_*`
//! functions and released by the matching `*_free`. Every fallible call
//! returns an [`SddeStatus`]; on failure a message is kept per thread and can
//! be read with [`sdde_last_error_message`]. Output pointers are written only
//! on success. Strings returned to the caller must be released with
//! [`sdde_string_free`].
//!
//! Pointer arguments must be either null (rejected with
//! `SDDE_STATUS_NULL_POINTER`) or valid for the access the function describes;
//! handles must not be used after they are freed.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use num_complex::Complex64;
use sdde_lan::fundamental::{fisher_limit, fisher_theta0, Grid};
use sdde_lan::harness::{run_experiment, write_outputs, ExperimentConfig};
use sdde_lan::inference::{log_likelihood_ratio, mle, score_and_info};
use sdde_lan::sim::{simulate, InitialPath, SamplePath};
use sdde_lan::spectrum::{classify_with_hint, Regime, RegimeReport};
use sdde_lan::{Error, MeasureDescriptor, SignedMeasure};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SddeStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed measure, grid, config or argument.
    InvalidArgument = 2,
    /// Root search, multiplicity or consistency failure.
    Numerical = 3,
    /// The information integral diverges (`v* ≥ 0`).
    InformationDiverges = 4,
    /// `∫Y²dt` vanishes, so the MLE is undefined.
    DegeneratePath = 5,
    /// Characteristic frequencies without a common period.
    Unclassified = 6,
    Io = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// Regime tag of a classification.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SddeRegime {
    Lan = 0,
    Laq = 1,
    Lamn = 2,
    Plamn = 3,
    Unclassified = 4,
}

impl From<Regime> for SddeRegime {
    fn from(r: Regime) -> Self {
        match r {
            Regime::Lan => SddeRegime::Lan,
            Regime::Laq => SddeRegime::Laq,
            Regime::Lamn => SddeRegime::Lamn,
            Regime::Plamn => SddeRegime::Plamn,
            Regime::Unclassified => SddeRegime::Unclassified,
        }
    }
}

/// Signed measure on `[-r, 0]`.
pub struct SddeMeasure(SignedMeasure);

/// Regime classification with its characteristic roots.
pub struct SddeReport(RegimeReport);

/// Simulated sample path.
pub struct SddePath(SamplePath);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SddeStatus {
    match err {
        Error::InvalidMeasure(_)
        | Error::Domain(_)
        | Error::Precondition(_)
        | Error::GridMismatch(_)
        | Error::Config(_)
        | Error::Json(_)
        | Error::Csv(_) => SddeStatus::InvalidArgument,
        Error::ContourDegenerate { .. }
        | Error::SearchDiverged(_)
        | Error::MultiplicityInconsistent(_)
        | Error::Consistency(_) => SddeStatus::Numerical,
        Error::InformationDiverges(_) => SddeStatus::InformationDiverges,
        Error::DegeneratePath(_) => SddeStatus::DegeneratePath,
        Error::Unclassified(_) => SddeStatus::Unclassified,
        Error::Io(_) => SddeStatus::Io,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Error>) -> SddeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SddeStatus::Ok
        }
        Ok(Err(err)) => {
            set_last_error(err.to_string());
            status_of(&err)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SddeStatus::Panic
        }
    }
}

macro_rules! check_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_last_error(format!("null pointer passed for {}", stringify!($p)));
            return SddeStatus::NullPointer;
        })+
    };
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, Error> {
    CStr::from_ptr(s).to_str().map_err(|e| Error::Domain(format!("string is not UTF-8: {e}")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Error> {
    CString::new(s).map(CString::into_raw).map_err(|e| Error::Domain(e.to_string()))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn sdde_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sdde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sdde_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a measure from its JSON description.
#[no_mangle]
pub unsafe extern "C" fn sdde_measure_from_json(json: *const c_char, out: *mut *mut SddeMeasure) -> SddeStatus {
    check_null!(json, out);
    guard(|| {
        let desc = MeasureDescriptor::from_json(read_str(json)?)?;
        *out = Box::into_raw(Box::new(SddeMeasure(desc.build()?)));
        Ok(())
    })
}

/// Measure `Σ w[i] δ_{u[i]}` on `[-r, 0]`.
#[no_mangle]
pub unsafe extern "C" fn sdde_measure_from_atoms(
    r: f64,
    u: *const f64,
    w: *const f64,
    n: usize,
    out: *mut *mut SddeMeasure,
) -> SddeStatus {
    check_null!(u, w, out);
    guard(|| {
        let u = std::slice::from_raw_parts(u, n);
        let w = std::slice::from_raw_parts(w, n);
        let atoms: Vec<(f64, f64)> = u.iter().copied().zip(w.iter().copied()).collect();
        *out = Box::into_raw(Box::new(SddeMeasure(SignedMeasure::from_atoms(r, &atoms)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sdde_measure_free(m: *mut SddeMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// `a([-r, 0])`.
#[no_mangle]
pub unsafe extern "C" fn sdde_measure_mass(m: *const SddeMeasure, out: *mut f64) -> SddeStatus {
    check_null!(m, out);
    guard(|| {
        *out = (*m).0.mass();
        Ok(())
    })
}

/// `M_j(λ) = ∫ u^j e^{λu} a(du)` at `λ = re + i·im`.
#[no_mangle]
pub unsafe extern "C" fn sdde_measure_exp_moment(
    m: *const SddeMeasure,
    re: f64,
    im: f64,
    j: usize,
    out_re: *mut f64,
    out_im: *mut f64,
) -> SddeStatus {
    check_null!(m, out_re, out_im);
    guard(|| {
        if j > sdde_lan::measure::MAX_MOMENT_ORDER {
            return Err(Error::Domain(format!("moment order {j} is too large")));
        }
        let v = (*m).0.exp_moment(Complex64::new(re, im), j);
        *out_re = v.re;
        *out_im = v.im;
        Ok(())
    })
}

/// Classify `θ`; `hint` is a regime name ("LAN", …) or null.
#[no_mangle]
pub unsafe extern "C" fn sdde_classify(
    theta: f64,
    m: *const SddeMeasure,
    hint: *const c_char,
    out: *mut *mut SddeReport,
) -> SddeStatus {
    check_null!(m, out);
    guard(|| {
        let hint = if hint.is_null() { None } else { Some(read_str(hint)?.parse::<Regime>()?) };
        let report = classify_with_hint(theta, &(*m).0, hint)?;
        *out = Box::into_raw(Box::new(SddeReport(report)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sdde_report_free(r: *mut SddeReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

#[no_mangle]
pub unsafe extern "C" fn sdde_report_regime(r: *const SddeReport, out: *mut SddeRegime) -> SddeStatus {
    check_null!(r, out);
    guard(|| {
        *out = (*r).0.regime.into();
        Ok(())
    })
}

/// `v*`; `*has_value` is 0 when `v* = -∞`.
#[no_mangle]
pub unsafe extern "C" fn sdde_report_v_star(r: *const SddeReport, out: *mut f64, has_value: *mut i32) -> SddeStatus {
    check_null!(r, out, has_value);
    guard(|| {
        *has_value = i32::from((*r).0.v_star.is_some());
        *out = (*r).0.v_star.unwrap_or(f64::NEG_INFINITY);
        Ok(())
    })
}

/// Scaling rate `r_T` of the regime at horizon `t`.
#[no_mangle]
pub unsafe extern "C" fn sdde_report_scaling_at(r: *const SddeReport, t: f64, out: *mut f64) -> SddeStatus {
    check_null!(r, out);
    guard(|| {
        let s = (*r).0.scaling.ok_or_else(|| Error::Precondition("the regime has no scaling".into()))?;
        *out = s.at(t);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sdde_report_root_count(r: *const SddeReport, out: *mut usize) -> SddeStatus {
    check_null!(r, out);
    guard(|| {
        *out = (*r).0.roots.len();
        Ok(())
    })
}

/// Root `index` (sorted by decreasing real part) and its multiplicity.
#[no_mangle]
pub unsafe extern "C" fn sdde_report_root(
    r: *const SddeReport,
    index: usize,
    re: *mut f64,
    im: *mut f64,
    multiplicity: *mut usize,
) -> SddeStatus {
    check_null!(r, re, im, multiplicity);
    guard(|| {
        let report = &(*r).0;
        let root = report
            .roots
            .get(index)
            .ok_or_else(|| Error::Domain(format!("root index {index} out of range")))?;
        *re = root.lambda.re;
        *im = root.lambda.im;
        *multiplicity = root.multiplicity;
        Ok(())
    })
}

/// Full report as JSON; release with [`sdde_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sdde_report_to_json(r: *const SddeReport, out: *mut *mut c_char) -> SddeStatus {
    check_null!(r, out);
    guard(|| {
        *out = into_c_string(sdde_lan::cli::report_json(&(*r).0).to_string())?;
        Ok(())
    })
}

/// `J = ∫_0^∞ y(t)² dt` for a parameter with `v* < 0`.
#[no_mangle]
pub unsafe extern "C" fn sdde_fisher_limit(theta: f64, m: *const SddeMeasure, out: *mut f64) -> SddeStatus {
    check_null!(m, out);
    guard(|| {
        *out = fisher_limit(theta, &(*m).0)?;
        Ok(())
    })
}

/// `J₀ = ∫_0^r a([-t, 0])² dt` for a measure of zero total mass.
#[no_mangle]
pub unsafe extern "C" fn sdde_fisher_theta0(m: *const SddeMeasure, out: *mut f64) -> SddeStatus {
    check_null!(m, out);
    guard(|| {
        *out = fisher_theta0(&(*m).0)?;
        Ok(())
    })
}

/// Euler–Maruyama path on `[-r, T]` from the constant initial segment `x0`.
/// `dt` must divide `r` and `T`.
#[no_mangle]
pub unsafe extern "C" fn sdde_simulate(
    theta: f64,
    m: *const SddeMeasure,
    x0: f64,
    dt: f64,
    horizon: f64,
    seed: u64,
    out: *mut *mut SddePath,
) -> SddeStatus {
    check_null!(m, out);
    guard(|| {
        let a = &(*m).0;
        if dt.is_nan() || dt <= 0.0 {
            return Err(Error::GridMismatch(format!("invalid step {dt}")));
        }
        let n_delay = (a.r() / dt).round() as usize;
        let grid = Grid::new(a.r(), n_delay.max(1), horizon)?;
        if (grid.dt - dt).abs() > 1e-9 * dt {
            return Err(Error::GridMismatch(format!("dt = {dt} does not divide r = {}", a.r())));
        }
        let path = simulate(theta, a, &InitialPath::constant(x0), &grid, seed)?;
        *out = Box::into_raw(Box::new(SddePath(path)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sdde_path_free(p: *mut SddePath) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of steps on `[0, T]`; `X` and `Y` have one more sample.
#[no_mangle]
pub unsafe extern "C" fn sdde_path_steps(p: *const SddePath, out: *mut usize) -> SddeStatus {
    check_null!(p, out);
    guard(|| {
        *out = (*p).0.grid.n_steps;
        Ok(())
    })
}

/// Copy `X(t_k)` and `Y(t_k)`, `k = 0..=steps`, into buffers of length `len`.
/// Either buffer may be null.
#[no_mangle]
pub unsafe extern "C" fn sdde_path_copy(p: *const SddePath, x: *mut f64, y: *mut f64, len: usize) -> SddeStatus {
    check_null!(p);
    guard(|| {
        let path = &(*p).0;
        let n = path.grid.n_steps + 1;
        if len < n {
            return Err(Error::Domain(format!("buffer of {len} values, need {n}")));
        }
        if !x.is_null() {
            ptr::copy_nonoverlapping(path.x_forward().as_ptr(), x, n);
        }
        if !y.is_null() {
            ptr::copy_nonoverlapping(path.y.as_ptr(), y, n);
        }
        Ok(())
    })
}

/// Scaled score and information at `theta` with rate `scaling`.
#[no_mangle]
pub unsafe extern "C" fn sdde_path_score(
    p: *const SddePath,
    theta: f64,
    scaling: f64,
    delta: *mut f64,
    info: *mut f64,
) -> SddeStatus {
    check_null!(p, delta, info);
    guard(|| {
        let pair = score_and_info(&(*p).0, theta, scaling)?;
        *delta = pair.delta;
        *info = pair.info;
        Ok(())
    })
}

/// `log dP_{theta_num}/dP_{theta_den}` on the path.
#[no_mangle]
pub unsafe extern "C" fn sdde_path_log_likelihood_ratio(
    p: *const SddePath,
    theta_num: f64,
    theta_den: f64,
    out: *mut f64,
) -> SddeStatus {
    check_null!(p, out);
    guard(|| {
        *out = log_likelihood_ratio(&(*p).0, theta_num, theta_den)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sdde_path_mle(p: *const SddePath, out: *mut f64) -> SddeStatus {
    check_null!(p, out);
    guard(|| {
        *out = mle(&(*p).0)?;
        Ok(())
    })
}

/// Run an experiment from its JSON config. Measure paths in the config are
/// resolved against `base_dir` (or the working directory when null); when
/// `out_dir` is non-null, `result.json` and `samples.csv` are written there.
/// `*passed` is 1 when every configured test passed; `result_json`, if
/// non-null, receives the full result.
#[no_mangle]
pub unsafe extern "C" fn sdde_experiment_run(
    config_json: *const c_char,
    base_dir: *const c_char,
    out_dir: *const c_char,
    passed: *mut i32,
    result_json: *mut *mut c_char,
) -> SddeStatus {
    check_null!(config_json, passed);
    guard(|| {
        let mut config: ExperimentConfig =
            serde_json::from_str(read_str(config_json)?).map_err(|e| Error::Config(e.to_string()))?;
        let base = if base_dir.is_null() { "." } else { read_str(base_dir)? };
        config.resolve_measure(Path::new(base))?;
        let result = run_experiment(&config)?;
        if !out_dir.is_null() {
            write_outputs(&result, Path::new(read_str(out_dir)?))?;
        }
        if !result_json.is_null() {
            *result_json = into_c_string(serde_json::to_string(&result)?)?;
        }
        *passed = i32::from(result.passed);
        Ok(())
    })
}
