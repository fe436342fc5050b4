use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn systems() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("systems")
}

fn modalpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modalpf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_system(dir: &tempfile::TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn table<'a>(doc: &'a Value, name: &str) -> &'a Value {
    doc["tables"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["name"] == name)
        .unwrap_or_else(|| panic!("no table {name}"))
}

#[test]
fn pf_on_a_diagonal_system_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_system(
        &dir,
        "diag.toml",
        "name = \"diag\"\ndimension = 2\nlinear = [[2.0, 0.0], [0.0, 1.0]]\n",
    );
    let doc = json(&modalpf(&["pf", "--system", &sys, "--format", "json"]));
    for row in table(&doc, "participation")["rows"].as_array().unwrap() {
        let expect = if row[0] == row[1] { 1.0 } else { 0.0 };
        assert_eq!(row[2].as_f64().unwrap(), expect);
        assert_eq!(row[3].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn pf_csv_layout() {
    let sys = systems().join("coupled.toml");
    let out = modalpf(&["pf", "--system", sys.to_str().unwrap(), "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# schema_version: 1\n"));
    assert!(text.contains("\nstate,mode,real,imag,stderr_real,stderr_imag,kind,method\n"));
    assert!(
        text.contains("\n1,1,2.0,0.0,,,mode_in_state,classic\n"),
        "{text}"
    );
}

#[test]
fn resonance_lists_the_order_two_entry() {
    let sys = systems().join("resonant.toml");
    let doc = json(&modalpf(&[
        "resonance",
        "--system",
        sys.to_str().unwrap(),
        "--max-order",
        "5",
        "--format",
        "json",
    ]));
    let rows = table(&doc, "resonances")["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], 2);
    assert_eq!(rows[0][1], 1);
    assert_eq!(rows[0][4], serde_json::json!([0, 2]));
}

#[test]
fn normalform_reports_one_third() {
    let sys = systems().join("saddle.toml");
    let doc = json(&modalpf(&[
        "normalform",
        "--system",
        sys.to_str().unwrap(),
        "--format",
        "json",
    ]));
    let rows = table(&doc, "state_coordinates")["rows"].as_array().unwrap();
    let hit = rows
        .iter()
        .find(|r| r[0] == "phi" && r[1] == 2 && r[2] == serde_json::json!([2, 0]))
        .expect("coefficient present");
    assert!((hit[3].as_f64().unwrap() - 1.0 / 3.0).abs() <= 1e-12);
    assert!(rows.iter().all(|r| r[0] != "w"));
    assert_eq!(doc["meta"]["linearizing"], true);
}

#[test]
fn simulate_and_empirical_emit_tidy_csv() {
    let saddle = systems().join("saddle.toml");
    let out = modalpf(&[
        "simulate",
        "--system",
        saddle.to_str().unwrap(),
        "--x0",
        "0.3,0.1",
        "--t-end",
        "1",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# schema_version: 1\nt,component,value\n0.0,1,0.3\n0.0,2,0.1\n"));
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    let z1 = (0.1 + 0.03) * 1f64.exp() - 0.03 * (-2f64).exp();
    assert_eq!(last[0], "1.0");
    assert!((last[2].parse::<f64>().unwrap() - z1).abs() <= 1e-7);

    let tri = systems().join("triangular.toml");
    let out = modalpf(&[
        "empirical",
        "--system",
        tri.to_str().unwrap(),
        "--samples",
        "4000",
        "--epsilon",
        "0.1,0.05",
        "--format",
        "csv",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# table: empirical\nepsilon,state,mode,value,stderr\n"));
}

#[test]
fn machine_output_is_reproducible() {
    let tri = systems().join("triangular.toml");
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["pf-mc", "pf-sim", "empirical"] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let path = dir.path().join(format!("{cmd}-{run}.json"));
            let out = modalpf(&[
                cmd,
                "--system",
                tri.to_str().unwrap(),
                "--samples",
                "5000",
                "--seed",
                "17",
                "--workers",
                "2",
                "--format",
                "json",
                "--output",
                path.to_str().unwrap(),
            ]);
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
            assert!(out.stdout.is_empty());
            outputs.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{cmd}");
    }
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_system(
        &dir,
        "bad.toml",
        "name = \"bad\"\ndimension = 2\nlinear = [[1.0, 0.0], [0.0, 2.0]]\n[[terms]]\ncomponent = 1\nexponents = [0, 0]\ncoeff = 1.0\n",
    );
    let out = modalpf(&["pf", "--system", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("system::SchemaError") && err.contains("terms[0].exponents"),
        "{err}"
    );

    assert_eq!(modalpf(&["pf"]).status.code(), Some(2));
    assert_eq!(modalpf(&["bogus"]).status.code(), Some(2));
    let sys = systems().join("saddle.toml");
    let out = modalpf(&["pf", "--system", sys.to_str().unwrap(), "--tol", "wobble=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--tol"));
    let out = modalpf(&[
        "simulate",
        "--system",
        sys.to_str().unwrap(),
        "--x0",
        "1,2,3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let repeated = write_system(
        &dir,
        "rep.toml",
        "name = \"rep\"\ndimension = 2\nlinear = [[1.0, 0.0], [0.0, 1.0]]\n",
    );
    let out = modalpf(&["eig", "--system", &repeated]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eigensystem::RepeatedEigenvalues"));
}

#[test]
fn analysis_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let center = write_system(
        &dir,
        "center.toml",
        "name = \"center\"\ndimension = 2\nlinear = [[0.0, 0.0], [0.0, -1.0]]\n[[terms]]\ncomponent = 1\nexponents = [0, 2]\ncoeff = 1.0\n",
    );
    let out = modalpf(&["pf", "--system", &center]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("normalform::RegimeNotEstablished"));

    let sys = systems().join("triangular.toml");
    let out = modalpf(&[
        "verify",
        "--system",
        sys.to_str().unwrap(),
        "--x0",
        "0.05,0.05",
        "--t-end",
        "0.5",
        "--order",
        "2",
        "--tol",
        "conjugacy=1e-12",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("pass          false"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dynamics::ConjugacyFailed"));

    let out = modalpf(&[
        "verify",
        "--system",
        sys.to_str().unwrap(),
        "--x0",
        "0.05,0.05",
        "--t-end",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn duplicate_terms_warn() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_system(
        &dir,
        "dup.toml",
        "name = \"dup\"\ndimension = 1\nlinear = [[-1.0]]\n[[terms]]\ncomponent = 1\nexponents = [2]\ncoeff = 1.0\n[[terms]]\ncomponent = 1\nexponents = [2]\ncoeff = 1.0\n",
    );
    let out = modalpf(&["normalform", "--system", &sys, "--format", "json"]);
    let doc = json(&out);
    assert_eq!(doc["warnings"].as_array().unwrap().len(), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: terms[1]"));
}
