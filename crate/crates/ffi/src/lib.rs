//! C ABI over the srl laboratory.
//!
//! Every object crosses the boundary as an opaque handle created by a
//! `*_new`/`*_from_*` function and released by the matching `*_free`. Calls
//! return an [`SrlStatus`]; on failure a message describing the most recent
//! error on the calling thread is available from [`srl_last_error`].
//! Panics never unwind into the caller: they are reported as
//! [`SrlStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use srl::bforms::{contact_volume_coefficient, BForm1};
use srl::cli::{run, Experiment, ExperimentConfig, ExperimentReport};
use srl::constructions::{bubble_form, darboux_form, twist_form};
use srl::fields::{Point, VectorField};
use srl::orbits::{classify_orbit, OrbitKind, OrbitSystem};
use srl::reeb::reeb_field;
use srl::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Invalid configuration, JSON or argument value.
    Config = 3,
    /// Point outside the domain of an object (e.g. on the critical set).
    Domain = 4,
    Dimension = 5,
    /// Degenerate geometry: non-contact, singular pairing, vanishing normalization.
    Degenerate = 6,
    OutOfRange = 7,
    Io = 8,
    Panic = 9,
}

/// Orbit classes, in the order of the taxonomy.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrlOrbitKind {
    PeriodicOffZ = 0,
    FixedPoint = 1,
    EscapeOrbit = 2,
    SingularPeriodic = 3,
    GeneralizedEscape = 4,
    GeneralizedSingularPeriodic = 5,
    Unresolved = 6,
}

impl From<OrbitKind> for SrlOrbitKind {
    fn from(k: OrbitKind) -> Self {
        match k {
            OrbitKind::PeriodicOffZ => SrlOrbitKind::PeriodicOffZ,
            OrbitKind::FixedPoint => SrlOrbitKind::FixedPoint,
            OrbitKind::EscapeOrbit => SrlOrbitKind::EscapeOrbit,
            OrbitKind::SingularPeriodic => SrlOrbitKind::SingularPeriodic,
            OrbitKind::GeneralizedEscape => SrlOrbitKind::GeneralizedEscape,
            OrbitKind::GeneralizedSingularPeriodic => SrlOrbitKind::GeneralizedSingularPeriodic,
            OrbitKind::Unresolved => SrlOrbitKind::Unresolved,
        }
    }
}

/// One check of a report, without its strings.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrlCheck {
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Experiment configuration.
pub struct SrlConfig(ExperimentConfig);

/// Result of one experiment run.
pub struct SrlReport {
    report: ExperimentReport,
    names: Vec<CString>,
}

/// A catalog 1-form together with its Reeb field.
pub struct SrlForm {
    form: BForm1,
    reeb: VectorField,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SrlStatus {
    match e {
        Error::Config(_) | Error::Json(_) => SrlStatus::Config,
        Error::Domain(_) | Error::NotOnCriticalSet(_) => SrlStatus::Domain,
        Error::Dimension(_) => SrlStatus::Dimension,
        Error::SingularPairing(_)
        | Error::DegenerateContact(_)
        | Error::DegenerateSymplectic(_)
        | Error::Degeneracy(_)
        | Error::Gluing(_) => SrlStatus::Degenerate,
        Error::EpsilonTooLarge(_) => SrlStatus::OutOfRange,
        Error::Io(_) => SrlStatus::Io,
    }
}

struct Fail(SrlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrlStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            SrlStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SrlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(SrlStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn srl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn srl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn srl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Configuration

/// Default configuration.
#[no_mangle]
pub extern "C" fn srl_config_new() -> *mut SrlConfig {
    Box::into_raw(Box::new(SrlConfig(ExperimentConfig::default())))
}

/// Parse and validate a JSON configuration document.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn srl_config_from_json(json: *const c_char, out: *mut *mut SrlConfig) -> SrlStatus {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        *out = ptr::null_mut();
        let c = ExperimentConfig::from_json(text(json, "json")?)?;
        *out = Box::into_raw(Box::new(SrlConfig(c)));
        Ok(())
    })
}

/// Set the perturbation size.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn srl_config_set_eps(cfg: *mut SrlConfig, eps: f64) -> SrlStatus {
    guard(|| {
        borrow_mut(cfg, "cfg")?.0.eps = eps;
        Ok(())
    })
}

/// Set the random seed.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn srl_config_set_seed(cfg: *mut SrlConfig, seed: u64) -> SrlStatus {
    guard(|| {
        borrow_mut(cfg, "cfg")?.0.seed = seed;
        Ok(())
    })
}

/// Set the number of sampled orbits.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn srl_config_set_seeds(cfg: *mut SrlConfig, seeds: usize) -> SrlStatus {
    guard(|| {
        borrow_mut(cfg, "cfg")?.0.seeds = seeds;
        Ok(())
    })
}

/// Set the output directory; null disables file output (the default).
///
/// # Safety
/// `cfg` must be a live configuration handle; `dir` null or nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn srl_config_set_output_dir(cfg: *mut SrlConfig, dir: *const c_char) -> SrlStatus {
    guard(|| {
        let c = borrow_mut(cfg, "cfg")?;
        c.0.output_dir = if dir.is_null() { None } else { Some(text(dir, "dir")?.into()) };
        Ok(())
    })
}

/// Serialize the configuration as JSON; free with [`srl_string_free`].
///
/// # Safety
/// `cfg` must be a live configuration handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn srl_config_to_json(cfg: *const SrlConfig, out: *mut *mut c_char) -> SrlStatus {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        let s = serde_json::to_string_pretty(&borrow(cfg, "cfg")?.0).map_err(Error::from)?;
        *out = CString::new(s).expect("JSON has no nul bytes").into_raw();
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn srl_config_free(cfg: *mut SrlConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---------------------------------------------------------------------------
// Experiments

/// Run the named experiment (e.g. `"verify"`, `"bubble"`). `cfg` may be null
/// for the defaults. A run whose checks fail still returns [`SrlStatus::Ok`];
/// inspect [`srl_report_pass`].
///
/// # Safety
/// `name` must be nul-terminated; `cfg` null or live; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn srl_run(name: *const c_char, cfg: *const SrlConfig, out: *mut *mut SrlReport) -> SrlStatus {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        *out = ptr::null_mut();
        let exp: Experiment = text(name, "name")?.parse()?;
        let default = ExperimentConfig::default();
        let cfg = if cfg.is_null() { &default } else { &borrow(cfg, "cfg")?.0 };
        let report = run(exp, cfg)?;
        let names = report
            .checks
            .iter()
            .map(|c| CString::new(c.name.replace('\0', " ")).expect("nul bytes removed"))
            .collect();
        *out = Box::into_raw(Box::new(SrlReport { report, names }));
        Ok(())
    })
}

/// Whether every check passed; false for a null handle.
///
/// # Safety
/// `rep` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn srl_report_pass(rep: *const SrlReport) -> bool {
    rep.as_ref().is_some_and(|r| r.report.pass)
}

/// Number of checks; 0 for a null handle.
///
/// # Safety
/// `rep` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn srl_report_check_count(rep: *const SrlReport) -> usize {
    rep.as_ref().map_or(0, |r| r.report.checks.len())
}

/// Numeric fields of check `index`.
///
/// # Safety
/// `rep` must be live; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn srl_report_check(rep: *const SrlReport, index: usize, out: *mut SrlCheck) -> SrlStatus {
    guard(|| {
        let r = borrow(rep, "rep")?;
        let out = borrow_mut(out, "out")?;
        let c = r.report.checks.get(index).ok_or_else(|| {
            Fail(SrlStatus::OutOfRange, format!("check {index} out of range ({} checks)", r.report.checks.len()))
        })?;
        *out = SrlCheck { measured: c.measured, expected: c.expected, tolerance: c.tolerance, pass: c.pass };
        Ok(())
    })
}

/// Name of check `index`, owned by the report; null when out of range.
///
/// # Safety
/// `rep` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn srl_report_check_name(rep: *const SrlReport, index: usize) -> *const c_char {
    rep.as_ref().and_then(|r| r.names.get(index)).map_or(ptr::null(), |c| c.as_ptr())
}

/// The full report as JSON; free with [`srl_string_free`].
///
/// # Safety
/// `rep` must be live; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn srl_report_json(rep: *const SrlReport, out: *mut *mut c_char) -> SrlStatus {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        *out = CString::new(borrow(rep, "rep")?.report.to_json()).expect("JSON has no nul bytes").into_raw();
        Ok(())
    })
}

/// # Safety
/// `rep` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn srl_report_free(rep: *mut SrlReport) {
    if !rep.is_null() {
        drop(Box::from_raw(rep));
    }
}

// ---------------------------------------------------------------------------
// Forms

/// Catalog form by name: `"bubble"`, `"darboux"` or `"twist"`.
///
/// # Safety
/// `name` must be nul-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn srl_form_catalog(name: *const c_char, out: *mut *mut SrlForm) -> SrlStatus {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        *out = ptr::null_mut();
        let form = match text(name, "name")? {
            "bubble" => bubble_form(),
            "darboux" => darboux_form(),
            "twist" => twist_form(),
            other => return Err(Fail(SrlStatus::Config, format!("unknown catalog form {other:?}"))),
        };
        let reeb = reeb_field(&form)?;
        *out = Box::into_raw(Box::new(SrlForm { form, reeb }));
        Ok(())
    })
}

/// Dimension of the form's chart; 0 for a null handle.
///
/// # Safety
/// `form` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn srl_form_dim(form: *const SrlForm) -> usize {
    form.as_ref().map_or(0, |f| f.form.dim())
}

unsafe fn point_of(f: &SrlForm, x: *const f64, n: usize) -> Result<Point, Fail> {
    let x = slice(x, n, "x")?;
    Ok(Point::new(f.form.base().chart(), x)?)
}

/// Contact-volume coefficient `C` of `α∧dα = C·vol_b` at `x` (`n` must be 3).
///
/// # Safety
/// `form` live; `x` valid for `n` reads; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn srl_form_volume_coefficient(form: *const SrlForm, x: *const f64, n: usize, out: *mut f64) -> SrlStatus {
    guard(|| {
        let f = borrow(form, "form")?;
        let out = borrow_mut(out, "out")?;
        *out = contact_volume_coefficient(&f.form, &point_of(f, x, n)?)?;
        Ok(())
    })
}

/// Reeb field at `x`, written to `out[0..n]`.
///
/// # Safety
/// `form` live; `x` valid for `n` reads; `out` valid for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn srl_form_reeb(form: *const SrlForm, x: *const f64, n: usize, out: *mut f64) -> SrlStatus {
    guard(|| {
        let f = borrow(form, "form")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = f.reeb.eval_point(&point_of(f, x, n)?)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&v);
        Ok(())
    })
}

/// Classify the Reeb orbit through `x` integrating up to `horizon` each way.
///
/// # Safety
/// `form` live; `x` valid for `n` reads; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn srl_form_classify(
    form: *const SrlForm,
    x: *const f64,
    n: usize,
    horizon: f64,
    out: *mut SrlOrbitKind,
) -> SrlStatus {
    guard(|| {
        let f = borrow(form, "form")?;
        let out = borrow_mut(out, "out")?;
        let opts = ExperimentConfig::default().classifier().with_horizon(horizon);
        opts.validate()?;
        let sys = OrbitSystem::from(f.reeb.clone());
        *out = classify_orbit(&sys, f.form.base(), &point_of(f, x, n)?, &opts).kind.into();
        Ok(())
    })
}

/// # Safety
/// `form` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn srl_form_free(form: *mut SrlForm) {
    if !form.is_null() {
        drop(Box::from_raw(form));
    }
}
