use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geoforms"))
}

fn specs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn run(args: &[&str], spec: Option<&str>) -> Output {
    let mut c = bin();
    c.args(args);
    if let Some(s) = spec {
        c.arg(specs().join(s));
    }
    c.output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn write_spec(name: &str, text: &str) -> PathBuf {
    let p = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const TOP_KEYS: [&str; 6] = [
    "command",
    "conventions",
    "residual-summary",
    "results",
    "spec-echo",
    "verdict",
];

fn entry(v: &Value, i: usize, j: usize) -> f64 {
    v[i][j].as_f64().unwrap()
}

#[test]
fn forms_of_the_exponential_fiber() {
    let out = run(&["forms", "--max-order", "5"], Some("fiber_e2t.toml"));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let points = r["results"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 27);
    for p in points {
        let g = &p["induced-metric"];
        for k in ["FF2", "FF3"] {
            let f = &p["forms"][k];
            for i in 0..3 {
                for j in 0..3 {
                    assert!((entry(f, i, j) - entry(g, i, j)).abs() < 1e-9);
                }
            }
        }
        assert!(p["forms"]["FF6"].is_null());
    }
}

#[test]
fn classify_base_like() {
    let out = run(&["classify"], Some("base_gaussian.toml"));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["verdict"], "base-like");
    for (stage, v) in r["residual-summary"]["stages"].as_object().unwrap() {
        assert!(v.as_f64().unwrap() <= 1e-8, "{stage}");
    }
}

#[test]
fn classify_rejects_a_non_product() {
    let spec = write_spec(
        "warped.toml",
        "dim = 3\ncoords = [\"t\", \"x\", \"y\"]\n[gbar]\nxx = \"1 + t*x\"\nyy = \"1\"\n",
    );
    let out = bin().arg("classify").arg(&spec).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["verdict"], "rejected-at-order-2");
}

#[test]
fn yamabe_on_the_sphere() {
    let out = run(&["yamabe"], Some("s3_fiber.toml"));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let phi = r["results"]["phi"].as_array().unwrap();
    let phi3 = phi.iter().find(|p| p["power"] == 3).unwrap();
    assert_eq!(phi3["rational"], "1/6");
    assert_eq!(r["results"]["willmore"]["rational"], "0");
    assert_eq!(r["results"]["closed-form"]["branch"], "sinh");
}

#[test]
fn conformal_check_on_a_product() {
    let out = run(&["conformal-check"], Some("s2s1_product.toml"));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"]["product"], true);
    assert!(r["residual-summary"]["product-third-form"].as_f64().unwrap() < 1e-8);
}

#[test]
fn conformal_weight_law() {
    let spec = write_spec(
        "weights.toml",
        r#"
dim = 4
coords = ["t", "x", "y", "z"]
[gbar]
xx = "exp(t*x) + 0.1*t^2"
xy = "0.2*t*y"
yy = "1 + sin(t)*z"
yz = "0.1*t^2*x"
zz = "cosh(t) + 0.1*x*t"
[warp]
omega = "exp(x)"
[grid]
counts = 2
"#,
    );
    let out = bin().arg("conformal-check").arg(&spec).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r["residual-summary"]["weight-second"].as_f64().unwrap() < 1e-8);
    assert!(r["residual-summary"]["weight-third"].as_f64().unwrap() < 1e-8);
}

#[test]
fn curvature_of_the_sphere_cylinder() {
    let out = run(&["curvature", "--points", "2"], Some("s3_fiber.toml"));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let points = r["results"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 8);
    for p in points {
        assert!((p["scalar"].as_f64().unwrap() - 6.0).abs() < 1e-9);
    }
}

#[test]
fn every_command_has_the_same_top_level_keys() {
    let cases: [(&[&str], Option<&str>); 5] = [
        (&["curvature", "--points", "1"], Some("s3_fiber.toml")),
        (&["forms", "--max-order", "3", "--points", "1"], Some("fiber_e2t.toml")),
        (&["classify", "--points", "1"], Some("s2s1_product.toml")),
        (&["yamabe", "--points", "1"], Some("s3_fiber.toml")),
        (&["conformal-check", "--points", "1"], Some("example.toml")),
    ];
    for (args, spec) in cases {
        let r = report(&run(args, spec));
        let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, TOP_KEYS, "{args:?}");
        assert_eq!(r["conventions"]["riemann-lowering-sign"], 1.0);
        assert_eq!(r["conventions"]["ff-sign"], 1.0);
    }
}

#[test]
fn reports_are_deterministic() {
    for (args, spec) in [
        (&["forms"][..], "example.toml"),
        (&["classify"][..], "base_gaussian.toml"),
    ] {
        let runs: Vec<Vec<u8>> = ["1", "4", "4"]
            .iter()
            .map(|w| {
                let out = bin()
                    .env("GEOFORMS_WORKERS", w)
                    .args(args)
                    .arg(specs().join(spec))
                    .output()
                    .unwrap();
                out.stdout
            })
            .collect();
        assert!(!runs[0].is_empty());
        assert!(runs.windows(2).all(|w| w[0] == w[1]), "{args:?} on {spec}");
    }
}

#[test]
fn out_flag_writes_the_report() {
    let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("forms-report.json");
    let _ = std::fs::remove_file(&path);
    let out = run(
        &["forms", "--max-order", "3", "--out", path.to_str().unwrap()],
        Some("fiber_e2t.toml"),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written = std::fs::read(&path).unwrap();
    assert_eq!(
        written,
        run(&["forms", "--max-order", "3"], Some("fiber_e2t.toml")).stdout
    );
}

#[test]
fn floats_have_at_most_15_significant_digits() {
    let out = run(&["yamabe"], Some("s3_fiber.toml"));
    let text = String::from_utf8(out.stdout).unwrap();
    for token in text.split(|c: char| !(c.is_ascii_digit() || c == '.' || c == 'e' || c == '-')) {
        let mantissa = token.split('e').next().unwrap();
        if mantissa.contains('.') {
            let digits = mantissa.trim_start_matches('-').replace('.', "");
            assert!(digits.trim_start_matches('0').len() <= 15, "{token}");
        }
    }
}

#[test]
fn unknown_coordinate_exits_3() {
    let spec = write_spec(
        "unknown.toml",
        "dim = 4\ncoords = [\"t\", \"x\", \"y\", \"z\"]\n[gbar]\nxx = \"exp(2*u)\"\nyy = \"1\"\nzz = \"1\"\n",
    );
    let out = bin().arg("forms").arg(&spec).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains('u'), "{err}");
}

#[test]
fn syntax_errors_exit_2_with_a_line() {
    let spec = write_spec(
        "syntax.toml",
        "dim = 4\ncoords = [\"t\", \"x\", \"y\", \"z\"]\n[gbar]\nxx = exp(2*t)\n",
    );
    let out = bin().arg("forms").arg(&spec).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    let spec = write_spec(
        "badexpr.toml",
        "dim = 4\ncoords = [\"t\", \"x\", \"y\", \"z\"]\n[gbar]\nxx = \"exp(2*\"\n",
    );
    let out = bin().arg("forms").arg(&spec).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    let spec = write_spec("dup.toml", "dim = 4\ndim = 4\ncoords = [\"t\", \"x\", \"y\", \"z\"]\n");
    assert_eq!(bin().arg("forms").arg(&spec).output().unwrap().status.code(), Some(2));
}

#[test]
fn bad_dimension_exits_3() {
    let spec = write_spec("dim.toml", "dim = 2\ncoords = [\"t\", \"x\"]\n");
    assert_eq!(bin().arg("forms").arg(&spec).output().unwrap().status.code(), Some(3));
}

#[test]
fn missing_file_and_bad_workers() {
    assert_eq!(run(&["forms", "/nonexistent/spec.toml"], None).status.code(), Some(2));
    let out = bin().env("GEOFORMS_WORKERS", "zero").arg("selftest").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_table() {
    let out = run(&["selftest"], None);
    let r = report(&out);
    let results = r["results"].as_array().unwrap();
    assert_eq!(results.len(), 11);
    let lines: Vec<String> = String::from_utf8_lossy(&out.stderr)
        .lines()
        .filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]"))
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), 11);
    let all = results.iter().all(|c| c["passed"] == true);
    assert_eq!(out.status.code(), Some(if all { 0 } else { 1 }));
    assert!(r["spec-echo"].is_null());
}
