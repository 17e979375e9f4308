use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grover-tree"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("regular3.json"), r#"{"kind":"regular","degree":3}"#).unwrap();
    std::fs::write(dir.path().join("sym43.json"), r#"{"kind":"spherically_symmetric","degrees_by_depth":[4,3]}"#).unwrap();
    dir
}

#[test]
fn spectrum_counts() {
    let dir = setup();
    let out = run(dir.path(), &["spectrum", "--tree", "regular3.json", "--depth", "2", "--out", "spec.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("spec.json")).unwrap()).unwrap();
    assert_eq!(v["counts"]["inherited"], 20);
    assert_eq!(v["counts"]["birth_plus"], 11);
    assert_eq!(v["counts"]["birth_minus"], 11);
    assert!(v["schema_version"].is_number());
}

#[test]
fn density_final_row() {
    let dir = setup();
    let out = run(dir.path(), &["density", "--tree", "regular3.json", "--max-depth", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let last = text.lines().last().unwrap();
    let cols: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let rho_col = cols.iter().position(|c| *c == "rho").unwrap();
    let rho: f64 = last.split(',').nth(rho_col).unwrap().parse().unwrap();
    assert!((rho - 0.2502).abs() < 5e-4, "{rho}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("0.25"));
}

#[test]
fn verify_passes_and_is_deterministic() {
    let dir = setup();
    let args = ["verify", "--tree", "regular3.json", "--depth", "3", "--seed", "7", "--out", "v1.json"];
    let a = run(dir.path(), &args);
    assert_eq!(a.status.code(), Some(0));
    let table = String::from_utf8(a.stdout).unwrap();
    assert!(table.contains("0 failed"), "{table}");
    assert!(!table.contains("FAIL"));
    let mut args2 = args;
    args2[8] = "v2.json";
    assert_eq!(run(dir.path(), &args2).status.code(), Some(0));
    let v1 = std::fs::read(dir.path().join("v1.json")).unwrap();
    let v2 = std::fs::read(dir.path().join("v2.json")).unwrap();
    assert_eq!(v1, v2);
}

#[test]
fn evolve_is_byte_identical() {
    let dir = setup();
    for out in ["e1.csv", "e2.csv"] {
        let o = run(dir.path(), &["evolve", "--tree", "regular3.json", "--initial", "B", "--steps", "6", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(dir.path().join("e1.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("e2.csv")).unwrap());
    assert!(String::from_utf8(a).unwrap().starts_with("step,vertex_path,value\n0,0,"));
    assert!(dir.path().join("e1.csv.meta.json").exists());
}

#[test]
fn custom_initial_state() {
    let dir = setup();
    std::fs::write(dir.path().join("psi.csv"), "arc_id,re,im\n0,1,0\n").unwrap();
    let o = run(
        dir.path(),
        &["evolve", "--tree", "regular3.json", "--initial", "custom:psi.csv", "--depth", "4", "--steps", "1", "--out", "c.csv"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert!(text.contains("\n0,0,1\n"), "{text}");
}

#[test]
fn flows_single_csv() {
    let dir = setup();
    let o = run(
        dir.path(),
        &["flows", "--tree", "regular3.json", "--depth", "1", "--vertex", "root", "--j", "1", "--sign", "-", "--out", "f.csv"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("arc_id,origin_path,terminus_path,re,im"));
}

#[test]
fn timeavg_and_limit_engines_agree() {
    let dir = setup();
    let mut vals = Vec::new();
    for engine in ["full", "radial"] {
        let out = format!("t_{engine}.csv");
        let o = run(
            dir.path(),
            &["timeavg", "--tree", "regular3.json", "--steps", "8", "--engine", engine, "--out", &out],
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        vals.push(std::fs::read_to_string(dir.path().join(&out)).unwrap());
    }
    // The radial engine lists one representative vertex per branch and depth.
    let parse = |s: &str| -> HashMap<String, f64> {
        s.lines()
            .skip(1)
            .map(|l| {
                let c: Vec<&str> = l.split(',').collect();
                (c[0].to_string(), c[2].parse().unwrap())
            })
            .collect()
    };
    let (full, radial) = (parse(&vals[0]), parse(&vals[1]));
    assert_eq!(radial.len(), 31);
    for (path, x) in &radial {
        assert!((full[path] - x).abs() < 1e-12, "{path}");
    }

    let o = run(dir.path(), &["limit", "--tree", "regular3.json", "--initial", "A"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').skip(2).all(|x| x.parse::<f64>().unwrap() == 0.0)), "{text}");
}

#[test]
fn spherically_symmetric_density_window() {
    let dir = setup();
    let o = run(dir.path(), &["density", "--tree", "sym43.json", "--max-depth", "12", "--out", "d.json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
    assert_eq!(v["limit"]["kind"], "window");
}

#[test]
fn user_errors_exit_one() {
    let dir = setup();
    let cases: [&[&str]; 5] = [
        &["frobnicate"],
        &["spectrum", "--tree", "missing.json"],
        &["spectrum", "--tree", "regular3.json", "--bogus"],
        &["evolve", "--tree", "regular3.json", "--depth", "3", "--steps", "8"],
        &["flows", "--tree", "regular3.json", "--vertex", "0.9", "--j", "1", "--sign", "+"],
    ];
    for args in cases {
        let o = run(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    let o = run(dir.path(), &["evolve", "--tree", "regular3.json", "--depth", "3", "--steps", "8"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least"));
}

#[test]
fn help_exits_zero() {
    let dir = setup();
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}
