use std::path::Path;
use std::process::{Command, Output};

use friedrichs::field::io::write_binary;
use friedrichs::field::{membership_mask, Grid, GridField, Region};
use friedrichs::geometry::gallery_level;
use serde_json::Value;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_friedrichs"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("FRIEDRICHS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn decompose_square_has_no_violations_and_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for o in [&a, &b] {
        let r = run(o, &["decompose", "--gallery", "unit_square", "--max-level", "8"]);
        assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    }
    let j = json(&a.join("decompose.json"));
    assert_eq!(j["schema_version"], "1");
    assert_eq!(j["config"]["command"]["decompose"]["max_level"], 8);
    assert_eq!(j["result"]["violations"], 0);
    let tags: Vec<&str> = j["result"]["checks"].as_array().unwrap().iter().map(|c| c["tag"].as_str().unwrap()).collect();
    for t in ["(w1)", "(w2)", "(w3)", "(numero)"] {
        assert!(tags.contains(&t), "{t}");
    }
    for f in ["w1.csv", "w2.csv", "reflection.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_tag_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let r = run(d.path(), &["decompose", "--gallery", "circle"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("unknown gallery tag"));
    let r = run(d.path(), &["decompose", "--max-level", "x"]);
    assert_eq!(r.status.code(), Some(1));
}

fn constant_field(dir: &Path) -> std::path::PathBuf {
    let dom = gallery_level("unit_square", None).unwrap();
    let g = Grid::covering(&dom, 8);
    let f = GridField::from_fn(g, 2, membership_mask(&g, &dom), Region::Interior, |_, o| o.copy_from_slice(&[1.5, -2.0]));
    write_binary(&f, &dir.join("const")).unwrap().1
}

#[test]
fn extend_constant_field_has_vanishing_derivative_terms() {
    let d = tempfile::tempdir().unwrap();
    let input = constant_field(d.path());
    let out = d.path().join("ext");
    let r = run(&out, &["extend", "--gallery", "unit_square", "--max-level", "6", "--input", input.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let j = json(&out.join("extension.json"));
    for e in j["result"]["report"]["extremes"].as_array().unwrap() {
        let tag = e["tag"].as_str().unwrap();
        // Derivative estimates on W3 compare roundoff with zero.
        if tag == "(stima2)" || tag == "(stima4)" {
            assert!(e["max_ratio"].as_f64().unwrap() < 1e-9, "{e}");
        }
    }
    assert!(out.join("fits.csv").exists());
}

#[test]
fn extend_is_idempotent_on_domain_data() {
    let d = tempfile::tempdir().unwrap();
    let (first, second) = (d.path().join("1"), d.path().join("2"));
    let r = run(&first, &["gen-field", "--gallery", "unit_square", "--grid-level", "8", "--seed", "4"]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let input = first.join("field.json");
    let r = run(&first, &["extend", "--gallery", "unit_square", "--max-level", "6", "--input", input.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let ev = first.join("ev.json");
    let r = run(&second, &["extend", "--gallery", "unit_square", "--max-level", "6", "--input", ev.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    assert_eq!(std::fs::read(first.join("ev.bin")).unwrap(), std::fs::read(second.join("ev.bin")).unwrap());
}

#[test]
fn extend_rejects_missing_or_mismatched_input() {
    let d = tempfile::tempdir().unwrap();
    let r = run(d.path(), &["extend", "--gallery", "unit_square", "--max-level", "6", "--input", "/nonexistent/f.json"]);
    assert_eq!(r.status.code(), Some(1));
    let input = constant_field(d.path());
    let r = run(d.path(), &["extend", "--gallery", "unit_cube", "--max-level", "4", "--input", input.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1), "{}", stderr(&r));
}

#[test]
fn estimate_convex_gaffney_is_near_one_and_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let args = ["estimate", "--inequality", "gaffney", "--bc", "normal-zero", "--p", "2", "--gallery", "unit_square", "--grid-level", "6", "--samples", "6"];
    let r = run(d.path(), &args);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let first = std::fs::read(d.path().join("estimate.json")).unwrap();
    let j: Value = serde_json::from_slice(&first).unwrap();
    let m = j["result"]["estimate"]["max_ratio"].as_f64().unwrap();
    assert!((1.0..=1.05).contains(&m), "{m}");
    assert!(d.path().join("maximizer.bin").exists());
    let r = run(d.path(), &args);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(first, std::fs::read(d.path().join("estimate.json")).unwrap());
}

#[test]
fn zero_samples_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let r = run(d.path(), &["estimate", "--inequality", "gaffney", "--bc", "normal-zero", "--gallery", "unit_square", "--samples", "0"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("samples must be ≥ 1"));
}

#[test]
fn verify_passes_on_square_and_names_injected_fault() {
    let d = tempfile::tempdir().unwrap();
    let r = run(d.path(), &["--threads", "1", "verify", "--gallery", "unit_square", "--max-level", "6"]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let j = json(&d.path().join("verify.json"));
    let checks = j["result"]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["passed"].as_bool().unwrap() && c["tag"].as_str().unwrap().starts_with('(')));
    for t in ["(w3)", "(numero)", "(prop2)", "(corol1)", "(corol2)", "(stima2)", "(gaffney)"] {
        assert!(checks.iter().any(|c| c["tag"] == t), "{t}");
    }
    let r = run(d.path(), &["verify", "--gallery", "unit_square", "--max-level", "6", "--inject-fault"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("(w3)"));
    let j = json(&d.path().join("verify.json"));
    assert!(j["result"]["checks"].as_array().unwrap().iter().any(|c| c["tag"] == "(w3)" && c["passed"] == false));
}

#[test]
fn singular_oracle_is_a_numerical_failure() {
    let d = tempfile::tempdir().unwrap();
    let r = run(d.path(), &["oracle", "--gallery", "unit_cube", "--bc", "normal-zero", "--grid-level", "4"]);
    assert_eq!(r.status.code(), Some(3), "{}", stderr(&r));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let d = tempfile::tempdir().unwrap();
    let target = d.path().join("from-env");
    let r = Command::new(env!("CARGO_BIN_EXE_friedrichs"))
        .args(["gen-field", "--gallery", "l_shape", "--grid-level", "5", "--bc", "tangential-zero"])
        .env("FRIEDRICHS_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    assert!(target.join("field.bin").exists());
    assert_eq!(json(&target.join("field.report.json"))["schema_version"], "1");
}
