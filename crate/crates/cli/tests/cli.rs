//! Black-box tests of the `actsig` binary: exit codes, determinism, and the
//! shape of the rendered output.

use std::process::{Command, Output};

fn actsig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actsig"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

#[test]
fn signature_json_contains_relu_mean() {
    let out = actsig(&["signature", "--activation", "relu", "--sigma", "1"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc[0]["m1"], serde_json::json!(0.39894228));
    assert_eq!(doc[0]["c_phi"], serde_json::json!(0.0));
}

#[test]
fn runs_are_byte_identical() {
    for args in [
        vec!["signature", "--activation", "swish,gelu", "--sigma", "0.5,2"],
        vec!["mc", "--activation", "relu", "--seed", "9", "--samples", "50000"],
        vec!["kernel-bound", "--activation", "tanh", "--dim", "3", "--trials", "4",
             "--samples", "20000", "--format", "csv"],
    ] {
        let a = actsig(&args);
        let b = actsig(&args);
        assert!(a.status.success(), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn golden_table_passes_and_reports_deviation() {
    let out = actsig(&["table", "--golden", "--format", "csv"]);
    assert!(out.status.success());
    let body = stdout(&out);
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "activation,sigma,m1,g1,g2,m2,eta");
    assert_eq!(lines.count(), 21);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("max absolute deviation"), "{err}");
}

#[test]
fn table_single_row_matches_closed_form() {
    let out = actsig(&["table", "--activations", "relu", "--sigmas", "2", "--format", "csv"]);
    assert!(out.status.success());
    let body = stdout(&out);
    assert!(body.lines().nth(1).unwrap().starts_with("relu,2,0.797884561,0.5,0.707106781,2,2"));
}

#[test]
fn unknown_activation_exits_2() {
    let out = actsig(&["signature", "--activation", "elu"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("elu"));
}

#[test]
fn bad_range_syntax_exits_2() {
    let out = actsig(&["criticality", "--activation", "relu", "--sigma-w", "1:2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn classify_matches_taxonomy_table() {
    let out = actsig(&["classify", "--activation", "tanh"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc[0]["class"], "A0 (bounded, saturating)");
}

#[test]
fn non_contraction_certificate_exits_3() {
    let out = actsig(&["lyapunov", "--activation", "relu", "--a", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["certificate"]["is_contraction"], serde_json::json!(false));
}

#[test]
fn criticality_csv_brackets_the_relu_boundary() {
    let out = actsig(&[
        "criticality", "--activation", "relu", "--sigma-w", "1:2:41", "--sigma-b", "0.1",
        "--format", "csv",
    ]);
    assert!(out.status.success());
    let body = stdout(&out);
    let flips: Vec<(f64, bool)> = body
        .lines()
        .skip(1)
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            (cells[0].parse().unwrap(), cells[4] == "true")
        })
        .collect();
    let idx = flips.windows(2).position(|w| w[0].1 != w[1].1).expect("a stability flip");
    assert!(flips[idx].0 < std::f64::consts::SQRT_2 && std::f64::consts::SQRT_2 < flips[idx + 1].0);
}

#[test]
fn out_flag_writes_the_same_bytes_as_stdout() {
    let dir = std::env::temp_dir().join("actsig-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sig.json");
    let piped = actsig(&["signature", "--activation", "tanh", "--sigma", "1"]);
    let to_file = actsig(&[
        "signature", "--activation", "tanh", "--sigma", "1", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(to_file.status.success());
    assert!(to_file.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), piped.stdout);
}
