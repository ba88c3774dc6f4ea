use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use covclose_ffi::*;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(covclose_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn take(s: *mut std::ffi::c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_string_lossy().into_owned();
    unsafe { covclose_string_free(s) };
    out
}

#[test]
fn metrics() {
    let mut p = 0.0;
    assert_eq!(
        unsafe { covclose_pass_at_k(5, 2, 3, &mut p) },
        CovcloseStatus::Ok
    );
    assert_eq!(p, 0.9);
    assert_eq!(
        unsafe { covclose_pass_at_k(3, 1, 4, &mut p) },
        CovcloseStatus::DomainError
    );
    assert!(last_error().contains("k = 4"));
    let v = [80.0, 90.0, 100.0];
    assert_eq!(
        unsafe { covclose_geometric_mean(v.as_ptr(), 3, &mut p) },
        CovcloseStatus::Ok
    );
    assert_eq!((p * 100.0).round() / 100.0, 89.63);
    assert_eq!(
        unsafe { covclose_geometric_mean(ptr::null(), 0, &mut p) },
        CovcloseStatus::DomainError
    );
    assert_eq!(
        covclose_classify_difficulty(450, 1),
        CovcloseDifficulty::Hard
    );
    assert_eq!(
        covclose_classify_difficulty(149, 2),
        CovcloseDifficulty::Medium
    );
    assert_eq!(
        unsafe { covclose_pass_at_k(5, 2, 3, ptr::null_mut()) },
        CovcloseStatus::NullArgument
    );
}

#[test]
fn design_handle() {
    let files: Vec<CString> = ["lfsr_core.v", "lfsr_top.v"]
        .iter()
        .map(|f| CString::new(root().join("designs/lfsr").join(f).to_str().unwrap()).unwrap())
        .collect();
    let ptrs: Vec<_> = files.iter().map(|c| c.as_ptr()).collect();
    let mut d = ptr::null_mut();
    assert_eq!(
        unsafe { covclose_design_parse(ptrs.as_ptr(), 2, ptr::null(), &mut d) },
        CovcloseStatus::Ok
    );
    let mut top = ptr::null_mut();
    assert_eq!(
        unsafe { covclose_design_top(d, &mut top) },
        CovcloseStatus::Ok
    );
    assert_eq!(take(top), "lfsr_top");
    let (mut lines, mut depth, mut level) = (0, 0, CovcloseDifficulty::Hard);
    assert_eq!(
        unsafe { covclose_design_metrics(d, &mut lines, &mut depth, &mut level) },
        CovcloseStatus::Ok
    );
    assert_eq!((depth, level), (2, CovcloseDifficulty::Medium));
    let mut ports = ptr::null_mut();
    assert_eq!(
        unsafe { covclose_design_ports_json(d, &mut ports) },
        CovcloseStatus::Ok
    );
    let ports: serde_json::Value = serde_json::from_str(&take(ports)).unwrap();
    assert!(ports.as_array().unwrap().len() >= 2);
    unsafe { covclose_design_free(d) };

    let bad = CString::new("/nonexistent/x.v").unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(
        unsafe { covclose_design_parse(&bad.as_ptr(), 1, ptr::null(), &mut d) },
        CovcloseStatus::IoError
    );
    assert!(d.is_null());
}

#[test]
fn coverage_handles() {
    let xml = CString::new(
        "<coverage version=\"1\" covered=\"1\" total=\"2\" percent=\"50.00\"><module name=\"m\" covered=\"1\" total=\"2\"><line number=\"3\" hits=\"1\"/><line number=\"4\" hits=\"0\"/></module></coverage>",
    )
    .unwrap();
    let other = CString::new(
        "<coverage version=\"1\" covered=\"1\" total=\"2\" percent=\"50.00\"><module name=\"m\" covered=\"1\" total=\"2\"><line number=\"3\" hits=\"0\"/><line number=\"4\" hits=\"2\"/></module></coverage>",
    )
    .unwrap();
    let (mut a, mut b, mut m) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(
            covclose_coverage_import_xml(xml.as_ptr(), &mut a),
            CovcloseStatus::Ok
        );
        assert_eq!(
            covclose_coverage_import_xml(other.as_ptr(), &mut b),
            CovcloseStatus::Ok
        );
        assert_eq!(covclose_coverage_merge(a, b, &mut m), CovcloseStatus::Ok);
        let (mut c, mut t, mut p) = (0, 0, 0.0);
        assert_eq!(
            covclose_coverage_score(m, &mut c, &mut t, &mut p),
            CovcloseStatus::Ok
        );
        assert_eq!((c, t, p), (2, 2, 100.0));
        let mut s = ptr::null_mut();
        assert_eq!(covclose_coverage_export_xml(m, &mut s), CovcloseStatus::Ok);
        assert!(take(s).contains("percent=\"100.00\""));
        let junk = CString::new("<nope/>").unwrap();
        let mut j = ptr::null_mut();
        assert_eq!(
            covclose_coverage_import_xml(junk.as_ptr(), &mut j),
            CovcloseStatus::CoverageError
        );
        assert!(j.is_null());
        covclose_coverage_free(a);
        covclose_coverage_free(b);
        covclose_coverage_free(m);
        covclose_coverage_free(ptr::null_mut());
    }
}

#[test]
fn run_manifest_returns_report() {
    let src = root().join("crates/core/tests/fixtures/scenarios/closure_a");
    let dir = tempfile::tempdir().unwrap();
    let mut text = std::fs::read_to_string(src.join("manifest.toml")).unwrap();
    text = text.replace(
        "\"../../../../../../designs",
        &format!("\"{}/designs", root().display()),
    );
    for f in ["scenario.toml", "transcript.toml"] {
        text = text.replace(
            &format!("\"{f}\""),
            &format!("\"{}\"", src.join(f).display()),
        );
    }
    let manifest = dir.path().join("manifest.toml");
    std::fs::write(&manifest, text).unwrap();
    let path = CString::new(manifest.to_str().unwrap()).unwrap();
    let (mut json, mut fatal) = (ptr::null_mut(), 99usize);
    assert_eq!(
        unsafe { covclose_run_manifest(path.as_ptr(), false, &mut json, &mut fatal) },
        CovcloseStatus::Ok
    );
    let report: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert_eq!(fatal, 0);
    assert_eq!(report["conversations"][0]["stop_reason"], "FullCoverage");
    assert!(dir.path().join("out/report.json").is_file());
    assert_eq!(
        unsafe { covclose_run_manifest(path.as_ptr(), false, &mut json, ptr::null_mut()) },
        CovcloseStatus::RunError
    );
    assert!(last_error().contains("already holds a run"));
}

#[test]
fn header_is_current_and_compiles_from_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/covclose.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "covclose_design_parse",
        "covclose_coverage_merge",
        "covclose_run_manifest",
        "covclose_last_error",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let lib = root().join("target/debug/libcovclose_ffi.a");
    if Command::new(&cc).arg("--version").output().is_err() || !lib.exists() {
        eprintln!("SKIP: no C compiler or static library");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(header.parent().unwrap())
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&exe)
        .arg(root().join("designs/toy_counter/toy_counter.v"))
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("top=toy_counter"));
}
