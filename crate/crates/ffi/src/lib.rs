//! C interface to covclose.
//!
//! Every fallible function returns a [`CovcloseStatus`]; on failure the
//! message is available from [`covclose_last_error`] on the same thread.
//! Strings returned through `char **` out-parameters are owned by the caller
//! and released with [`covclose_string_free`]. Handles are released with
//! their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use covclose::app::{run_manifest, RunOptions};
use covclose::coverage::{self, CoverageMap};
use covclose::hdl::{self, DesignModel, DifficultyLabel};
use covclose::report::{self, RunManifest};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovcloseStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    DomainError = 4,
    IoError = 5,
    CoverageError = 6,
    RunError = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovcloseDifficulty {
    Easy = 0,
    Medium = 1,
    Hard = 2,
}

impl From<DifficultyLabel> for CovcloseDifficulty {
    fn from(d: DifficultyLabel) -> Self {
        match d {
            DifficultyLabel::Easy => CovcloseDifficulty::Easy,
            DifficultyLabel::Medium => CovcloseDifficulty::Medium,
            DifficultyLabel::Hard => CovcloseDifficulty::Hard,
        }
    }
}

/// Parsed design sources.
pub struct CovcloseDesign(DesignModel);

/// Line-coverage map.
pub struct CovcloseCoverage(CoverageMap);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("no interior nul"));
}

type Fallible<T> = Result<T, (CovcloseStatus, String)>;

fn guard(f: impl FnOnce() -> Fallible<()>) -> CovcloseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CovcloseStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CovcloseStatus::Panic
        }
    }
}

fn null(what: &str) -> (CovcloseStatus, String) {
    (CovcloseStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Fallible<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CovcloseStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Fallible<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Fallible<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("no interior nul")
        .into_raw()
}

/// Message of the last failure on this thread; empty when none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn covclose_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn covclose_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn covclose_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `count` source files. `top` may be null to infer the top module.
///
/// # Safety
/// `paths` must point to `count` valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_design_parse(
    paths: *const *const c_char,
    count: usize,
    top: *const c_char,
    out: *mut *mut CovcloseDesign,
) -> CovcloseStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if paths.is_null() && count > 0 {
            return Err(null("paths"));
        }
        let mut files = Vec::with_capacity(count);
        for i in 0..count {
            files.push(PathBuf::from(str_arg(*paths.add(i), "path")?));
        }
        let parse = |e: hdl::HdlError| {
            let status = match e {
                hdl::HdlError::Io { .. } => CovcloseStatus::IoError,
                _ => CovcloseStatus::ParseError,
            };
            (status, e.to_string())
        };
        let mut model = hdl::load_sources(&files).map_err(parse)?;
        if !top.is_null() {
            model = model.with_top(str_arg(top, "top")?).map_err(parse)?;
        }
        *out = Box::into_raw(Box::new(CovcloseDesign(model)));
        Ok(())
    })
}

/// # Safety
/// `design` must come from [`covclose_design_parse`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn covclose_design_free(design: *mut CovcloseDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// Top module name, caller-owned.
///
/// # Safety
/// `design` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_design_top(
    design: *const CovcloseDesign,
    out: *mut *mut c_char,
) -> CovcloseStatus {
    guard(|| {
        let d = ref_arg(design, "design")?;
        *out_arg(out, "out")? = owned_string(d.0.top.clone());
        Ok(())
    })
}

/// # Safety
/// `design` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_design_metrics(
    design: *const CovcloseDesign,
    total_lines: *mut usize,
    hierarchy_depth: *mut usize,
    difficulty: *mut CovcloseDifficulty,
) -> CovcloseStatus {
    guard(|| {
        let d = &ref_arg(design, "design")?.0;
        *out_arg(total_lines, "total_lines")? = d.total_lines;
        *out_arg(hierarchy_depth, "hierarchy_depth")? = d.hierarchy_depth;
        *out_arg(difficulty, "difficulty")? = d.difficulty().into();
        Ok(())
    })
}

/// Top-module ports as a JSON array, caller-owned.
///
/// # Safety
/// `design` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_design_ports_json(
    design: *const CovcloseDesign,
    out: *mut *mut c_char,
) -> CovcloseStatus {
    guard(|| {
        let d = &ref_arg(design, "design")?.0;
        let out = out_arg(out, "out")?;
        let ports =
            hdl::extract_top_ports(d).map_err(|e| (CovcloseStatus::ParseError, e.to_string()))?;
        *out = owned_string(serde_json::to_string(&ports).expect("ports serialize"));
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn covclose_classify_difficulty(
    total_lines: usize,
    hierarchy_depth: usize,
) -> CovcloseDifficulty {
    hdl::classify_difficulty(total_lines, hierarchy_depth).into()
}

/// Probability that one of `k` of `n` candidates, `c` of them good, is good.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_pass_at_k(
    n: u64,
    c: u64,
    k: u64,
    out: *mut f64,
) -> CovcloseStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out =
            report::pass_at_k(n, c, k).map_err(|e| (CovcloseStatus::DomainError, e.to_string()))?;
        Ok(())
    })
}

/// Geometric mean of `len` percentages; zeros are skipped.
///
/// # Safety
/// `values` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_geometric_mean(
    values: *const f64,
    len: usize,
    out: *mut f64,
) -> CovcloseStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if values.is_null() && len > 0 {
            return Err(null("values"));
        }
        let v = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(values, len)
        };
        *out = report::geometric_mean(v)
            .map_err(|e| (CovcloseStatus::DomainError, e.to_string()))?
            .value;
        Ok(())
    })
}

fn cov_err(e: coverage::CoverageError) -> (CovcloseStatus, String) {
    let status = match e {
        coverage::CoverageError::Io { .. } => CovcloseStatus::IoError,
        _ => CovcloseStatus::CoverageError,
    };
    (status, e.to_string())
}

fn new_map(out: &mut *mut CovcloseCoverage, m: CoverageMap) {
    *out = Box::into_raw(Box::new(CovcloseCoverage(m)));
}

/// Reads a coverage XML report.
///
/// # Safety
/// `xml` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_coverage_import_xml(
    xml: *const c_char,
    out: *mut *mut CovcloseCoverage,
) -> CovcloseStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let m = coverage::import_report(str_arg(xml, "xml")?).map_err(cov_err)?;
        new_map(out, m);
        Ok(())
    })
}

/// Reads a simulator coverage artifact and maps it onto `design`.
///
/// # Safety
/// `path` must be a valid C string, `design` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_coverage_parse_artifact(
    path: *const c_char,
    design: *const CovcloseDesign,
    out: *mut *mut CovcloseCoverage,
) -> CovcloseStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = &ref_arg(design, "design")?.0;
        let m = coverage::parse_artifact(std::path::Path::new(str_arg(path, "path")?), d)
            .map_err(cov_err)?;
        new_map(out, m);
        Ok(())
    })
}

/// Sums the hits of two maps with the same instrumented lines into a new map.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_coverage_merge(
    a: *const CovcloseCoverage,
    b: *const CovcloseCoverage,
    out: *mut *mut CovcloseCoverage,
) -> CovcloseStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let m = coverage::merge(&ref_arg(a, "a")?.0, &ref_arg(b, "b")?.0).map_err(cov_err)?;
        new_map(out, m);
        Ok(())
    })
}

/// Covered and instrumented line counts, and the percentage rounded to 2 decimals.
///
/// # Safety
/// `map` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_coverage_score(
    map: *const CovcloseCoverage,
    covered: *mut usize,
    total: *mut usize,
    percent: *mut f64,
) -> CovcloseStatus {
    guard(|| {
        let s = coverage::score(&ref_arg(map, "map")?.0).map_err(cov_err)?;
        *out_arg(covered, "covered")? = s.covered;
        *out_arg(total, "total")? = s.total;
        *out_arg(percent, "percent")? = s.percent();
        Ok(())
    })
}

/// The map as a coverage XML report, caller-owned.
///
/// # Safety
/// `map` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_coverage_export_xml(
    map: *const CovcloseCoverage,
    out: *mut *mut c_char,
) -> CovcloseStatus {
    guard(|| {
        let m = &ref_arg(map, "map")?.0;
        *out_arg(out, "out")? = owned_string(coverage::export_report(m));
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn covclose_coverage_free(map: *mut CovcloseCoverage) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Runs a manifest file to completion and returns report.json, caller-owned.
/// Conversations that stopped on an error are reported inside the JSON;
/// `fatal_conversations` receives their count and may be null.
///
/// # Safety
/// `manifest_path` must be a valid C string; `report_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covclose_run_manifest(
    manifest_path: *const c_char,
    overwrite: bool,
    report_json: *mut *mut c_char,
    fatal_conversations: *mut usize,
) -> CovcloseStatus {
    guard(|| {
        let out = out_arg(report_json, "report_json")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(manifest_path, "manifest_path")?);
        let m =
            RunManifest::load(&path).map_err(|e| (CovcloseStatus::ParseError, e.to_string()))?;
        let opts = RunOptions {
            overwrite,
            record_transcript: None,
        };
        let outcome =
            run_manifest(&m, &opts).map_err(|e| (CovcloseStatus::RunError, e.to_string()))?;
        if let Some(f) = fatal_conversations.as_mut() {
            *f = outcome.fatal_conversations();
        }
        *out = owned_string(outcome.report.to_json());
        Ok(())
    })
}
