use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use grover_tree_ffi::*;

fn spec(text: &str) -> CString {
    CString::new(text).unwrap()
}

fn last_error() -> String {
    let p = gt_last_error_message();
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { gt_string_free(p) };
    s
}

fn regular3(depth: usize) -> *mut GtTree {
    let mut t = ptr::null_mut();
    let s = spec(r#"{"kind":"regular","degree":3}"#);
    assert_eq!(unsafe { gt_tree_new(s.as_ptr(), depth, &mut t) }, GtStatus::Ok);
    t
}

#[test]
fn tree_handle_lifecycle() {
    let t = regular3(2);
    assert_eq!(unsafe { gt_tree_num_vertices(t) }, 22);
    assert_eq!(unsafe { gt_tree_num_arcs(t) }, 42);
    unsafe { gt_tree_free(t) };
    assert_eq!(unsafe { gt_tree_num_vertices(ptr::null()) }, 0);
    unsafe { gt_tree_free(ptr::null_mut()) };
}

#[test]
fn walk_preserves_norm() {
    let t = regular3(3);
    let n = unsafe { gt_tree_num_arcs(t) };
    let input: Vec<f64> = (0..2 * n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    let mut output = vec![0.0; 2 * n];
    let st = unsafe { gt_walk_apply(t, -1, input.as_ptr(), output.as_mut_ptr(), n) };
    assert_eq!(st, GtStatus::Ok);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    assert!((norm(&input) - norm(&output)).abs() < 1e-9 * norm(&input));
    let st = unsafe { gt_walk_apply(t, -1, input.as_ptr(), output.as_mut_ptr(), n - 1) };
    assert_eq!(st, GtStatus::DimensionMismatch);
    assert!(last_error().contains("expected"));
    unsafe { gt_tree_free(t) };
}

#[test]
fn evolution_and_limit() {
    let t = regular3(4);
    let nv = unsafe { gt_tree_num_vertices(t) };
    let mut mu = vec![0.0; nv];
    assert_eq!(unsafe { gt_evolve_distribution(t, GtInitial::B, 2, mu.as_mut_ptr(), nv) }, GtStatus::Ok);
    assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { gt_evolve_distribution(t, GtInitial::B, 9, mu.as_mut_ptr(), nv) }, GtStatus::Precondition);
    let mut mass = 0.0;
    assert_eq!(unsafe { gt_limit_distribution(t, GtInitial::B, mu.as_mut_ptr(), nv, &mut mass) }, GtStatus::Ok);
    assert!((mass - 0.5).abs() < 1e-12);
    assert!((mu[0] - 0.125).abs() < 1e-12);
    assert_eq!(unsafe { gt_limit_distribution(t, GtInitial::A, ptr::null_mut(), 0, &mut mass) }, GtStatus::Ok);
    assert!(mass < 1e-24);
    unsafe { gt_tree_free(t) };
}

#[test]
fn string_results() {
    let s = spec(r#"{"kind":"regular","degree":3}"#);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gt_spectrum_json(s.as_ptr(), 1, &mut out) }, GtStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { gt_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["counts"]["birth_plus"], 5);
    assert_eq!(unsafe { gt_density_csv(s.as_ptr(), 2, &mut out) }, GtStatus::Ok);
    let csv = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { gt_string_free(out) };
    assert!(csv.lines().nth(3).unwrap().starts_with("2,10,12,"));
}

#[test]
fn error_codes() {
    let mut t = ptr::null_mut();
    let bad = spec(r#"{"kind":"regular","degree":1}"#);
    assert_eq!(unsafe { gt_tree_new(bad.as_ptr(), 2, &mut t) }, GtStatus::InvalidSpec);
    assert!(last_error().contains("degree"));
    let junk = spec("not json");
    assert_eq!(unsafe { gt_tree_new(junk.as_ptr(), 2, &mut t) }, GtStatus::InvalidSpec);
    assert_eq!(unsafe { gt_tree_new(ptr::null(), 2, &mut t) }, GtStatus::NullPointer);
    let s = spec(r#"{"kind":"regular","degree":3}"#);
    assert_eq!(unsafe { gt_tree_new(s.as_ptr(), 60, &mut t) }, GtStatus::SizeCap);
    assert!(t.is_null());
    let ok = regular3(1);
    assert_eq!(unsafe { gt_tree_num_arcs(ok) }, 18);
    assert!(gt_last_error_message().is_null());
    unsafe { gt_tree_free(ok) };
    let v = unsafe { CStr::from_ptr(gt_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/grover_tree.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["gt_tree_new", "gt_walk_apply", "gt_last_error_message", "GT_STATUS_SIZE_CAP"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler; skipped compiling the header");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
