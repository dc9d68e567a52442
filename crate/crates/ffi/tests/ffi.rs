use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use promptopt_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(pd_last_error_message()) }.to_string_lossy().into_owned()
}

/// Takes ownership of a returned string.
fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { pd_string_free(p) };
    s
}

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

#[test]
fn edit_distance_counts_words() {
    let mut out = 0usize;
    let st = unsafe { pd_word_edit_distance(c("a b c").as_ptr(), c("a x c d").as_ptr(), &mut out) };
    assert_eq!(st, PdStatus::Ok);
    assert_eq!(out, 2);
}

#[test]
fn rouge_and_exact_match() {
    let mut f = 0.0;
    assert_eq!(unsafe { pd_rouge_l(c("the cat sat").as_ptr(), c("the cat").as_ptr(), &mut f) }, PdStatus::Ok);
    // lcs 2, precision 2/3, recall 1
    assert!((f - 0.8).abs() < 1e-12);

    let mut em = 0.0;
    assert_eq!(unsafe { pd_exact_match(c(" Paris ").as_ptr(), c("paris").as_ptr(), &mut em) }, PdStatus::Ok);
    assert_eq!(em, 1.0);
    assert_eq!(unsafe { pd_exact_match(c("Lyon").as_ptr(), c("paris").as_ptr(), &mut em) }, PdStatus::Ok);
    assert_eq!(em, 0.0);
}

#[test]
fn null_and_utf8_errors() {
    let mut out = 0usize;
    let st = unsafe { pd_word_edit_distance(ptr::null(), c("a").as_ptr(), &mut out) };
    assert_eq!(st, PdStatus::NullArgument);
    assert!(last_error().contains("a is null"));

    let bad = [0xffu8 as c_char, 0];
    let st = unsafe { pd_word_edit_distance(bad.as_ptr(), c("a").as_ptr(), &mut out) };
    assert_eq!(st, PdStatus::InvalidUtf8);

    let st = unsafe { pd_word_edit_distance(c("a").as_ptr(), c("a").as_ptr(), ptr::null_mut()) };
    assert_eq!(st, PdStatus::NullArgument);
}

#[test]
fn extract_marked_round_trip() {
    let mut out = ptr::null_mut();
    let st = unsafe { pd_extract_marked(c("notes START  Be brief. END tail").as_ptr(), &mut out) };
    assert_eq!(st, PdStatus::Ok);
    assert_eq!(take(out), "Be brief.");

    let mut out = ptr::null_mut();
    let st = unsafe { pd_extract_marked(c("no markers").as_ptr(), &mut out) };
    assert_eq!(st, PdStatus::MarkerNotFound);
    assert!(out.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn schedule_handle() {
    let mut s = ptr::null_mut();
    let st = unsafe { pd_schedule_new(PdScheduleKind::LinearDecay, 10, 6, false, 0.2, &mut s) };
    assert_eq!(st, PdStatus::Ok);
    let mut budget = 0u32;
    let mut constrained = false;
    unsafe {
        assert_eq!(pd_schedule_constraint_at(s, 0, &mut budget, &mut constrained), PdStatus::Ok);
        assert!(constrained);
        assert_eq!(budget, 10);
        assert_eq!(pd_schedule_constraint_at(s, 5, &mut budget, &mut constrained), PdStatus::Ok);
        assert_eq!(budget, 2);
        assert_eq!(pd_schedule_constraint_at(s, 6, &mut budget, &mut constrained), PdStatus::InvalidArgument);
        pd_schedule_free(s);
    }

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { pd_schedule_new(PdScheduleKind::None, 10, 6, false, 0.2, &mut s) }, PdStatus::Ok);
    unsafe {
        assert_eq!(pd_schedule_constraint_at(s, 3, &mut budget, &mut constrained), PdStatus::Ok);
        assert!(!constrained);
        pd_schedule_free(s);
    }

    let mut s = ptr::null_mut();
    let st = unsafe { pd_schedule_new(PdScheduleKind::Fixed, 10, 0, false, 0.2, &mut s) };
    assert_ne!(st, PdStatus::Ok);
    assert!(s.is_null());
    unsafe { pd_schedule_free(ptr::null_mut()) };
}

#[test]
fn template_render_matches_golden() {
    let goldens = core_dir().join("tests/goldens");
    let bindings = std::fs::read_to_string(goldens.join("bindings.json")).unwrap();

    let mut out = ptr::null_mut();
    let st = unsafe { pd_template_render(c("opro_update").as_ptr(), c(&bindings).as_ptr(), &mut out) };
    assert_eq!(st, PdStatus::Ok, "{}", last_error());
    let golden = std::fs::read_to_string(goldens.join("opro_update.txt")).unwrap();
    assert_eq!(take(out), golden.trim_end_matches('\n'));

    let mut out = ptr::null_mut();
    let st = unsafe { pd_template_render(c("nope").as_ptr(), c("{}").as_ptr(), &mut out) };
    assert_eq!(st, PdStatus::InvalidArgument);
    assert!(last_error().contains("nope"));

    let st = unsafe { pd_template_render(c("opro_update").as_ptr(), c("[1]").as_ptr(), &mut out) };
    assert_eq!(st, PdStatus::InvalidArgument);
}

fn write_config(dir: &Path) -> PathBuf {
    let fixtures = core_dir().join("fixtures");
    let base = std::fs::read_to_string(fixtures.join("mock_run.toml")).unwrap();
    let text = base
        .replace(
            "output_dir = \"../../../target/promptopt-mock-run\"",
            &format!("output_dir = {:?}", dir.join("out").display().to_string()),
        )
        .replace("data = \"arith.jsonl\"", &format!("data = {:?}", fixtures.join("arith.jsonl").display().to_string()));
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_pause_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = c(&write_config(tmp.path()).display().to_string());

    let mut out = ptr::null_mut();
    let st = unsafe { pd_run_config(cfg.as_ptr(), false, 2, &mut out) };
    assert_eq!(st, PdStatus::Ok, "{}", last_error());
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["outcome"], "paused");
    assert_eq!(v["summary"]["steps"], 2);

    // Existing run without `fresh`.
    let mut out = ptr::null_mut();
    assert_ne!(unsafe { pd_run_config(cfg.as_ptr(), false, -1, &mut out) }, PdStatus::Ok);
    assert!(last_error().contains("fresh"));

    let dir = c(&tmp.path().join("out").display().to_string());
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pd_resume(dir.as_ptr(), -1, &mut out) }, PdStatus::Ok, "{}", last_error());
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["outcome"], "stopped");
    assert_eq!(v["summary"]["steps"], 6);
    assert_eq!(v["summary"]["stop_reason"], "max_steps");

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pd_resume(dir.as_ptr(), -1, &mut out) }, PdStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["outcome"], "already_converged");
}

#[test]
fn run_errors_map_to_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut out = ptr::null_mut();
    let missing = c(&tmp.path().join("none").display().to_string());
    assert_eq!(unsafe { pd_resume(missing.as_ptr(), -1, &mut out) }, PdStatus::MissingRun, "{}", last_error());

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "foo = 1\n").unwrap();
    let cfg = c(&cfg.display().to_string());
    assert_eq!(unsafe { pd_run_config(cfg.as_ptr(), false, -1, &mut out) }, PdStatus::Config);
    assert!(last_error().contains("foo"));
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(pd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/promptopt.h")).unwrap();
    for sym in [
        "typedef struct PdSchedule PdSchedule;",
        "PD_STATUS_OK = 0",
        "PD_STATUS_CORRUPT_STATE",
        "const char *pd_last_error_message(void);",
        "void pd_string_free(char *s);",
        "PdStatus pd_run_config(",
        "PdStatus pd_resume(",
        "PdStatus pd_template_render(",
        "PdStatus pd_word_edit_distance(",
        "void pd_schedule_free(PdSchedule *schedule);",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

/// Compiles and runs a small C program against the shared library when a C
/// compiler is on PATH.
#[test]
fn c_program_links() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("cc not found, skipping");
        return;
    }
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    if !lib_dir.join("libpromptopt_ffi.so").exists() {
        eprintln!("shared library not found in {}, skipping", lib_dir.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "promptopt.h"
int main(void) {
    size_t d = 0;
    if (pd_word_edit_distance("a b c", "a c", &d) != PD_STATUS_OK) return 1;
    char *out = NULL;
    if (pd_extract_marked("x START hi END", &out) != PD_STATUS_OK) return 2;
    printf("%zu %s\n", d, out);
    pd_string_free(out);
    if (pd_extract_marked("none", &out) != PD_STATUS_MARKER_NOT_FOUND) return 3;
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lpromptopt_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status);
    assert_eq!(String::from_utf8_lossy(&run.stdout), "1 hi\n");
}
