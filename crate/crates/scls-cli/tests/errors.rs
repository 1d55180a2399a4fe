//! Exit codes and stderr contract: invalid input exits 2 with a single
//! `ERROR <code>: <detail>` line; valid variants behave as documented.

use scls_core::io::write_composition_csv;
use scls_core::simplex::dirichlet_sample;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_scls"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_inputs(dir: &Path, d_r: usize) -> (PathBuf, PathBuf) {
    let y = dirichlet_sample(&vec![2.0; d_r], 30, 555_001).unwrap();
    let x = dirichlet_sample(&[1.0, 1.0, 1.0], 30, 555_002).unwrap();
    let y_path = dir.join("y.csv");
    let x_path = dir.join("x.csv");
    write_composition_csv(fs::File::create(&y_path).unwrap(), &y).unwrap();
    write_composition_csv(fs::File::create(&x_path).unwrap(), &x).unwrap();
    (y_path, x_path)
}

fn assert_error(output: &std::process::Output, code_fragment: &str) {
    assert_eq!(output.status.code(), Some(2), "expected exit 2");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.starts_with("ERROR ") && stderr.contains(code_fragment),
        "stderr was: {stderr}"
    );
}

#[test]
fn zero_permutations_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (y, x) = write_inputs(dir.path(), 3);
    let out = run(&[
        "test",
        "independence",
        "--response",
        &y.to_string_lossy(),
        "--predictor",
        &x.to_string_lossy(),
        "--permutations",
        "0",
        "--seed",
        "1",
    ]);
    assert_error(&out, "BadInput");
}

#[test]
fn missing_input_file_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, x) = write_inputs(dir.path(), 3);
    let out = run(&[
        "fit",
        "--response",
        &dir.path().join("absent.csv").to_string_lossy(),
        "--predictor",
        &x.to_string_lossy(),
        "--out",
        &dir.path().to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ERROR "));
}

#[test]
fn off_simplex_row_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, x) = write_inputs(dir.path(), 3);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y1,y2,y3\n0.5,0.4,0.4\n").unwrap();
    let out = run(&[
        "fit",
        "--response",
        &bad.to_string_lossy(),
        "--predictor",
        &x.to_string_lossy(),
        "--out",
        &dir.path().to_string_lossy(),
    ]);
    assert_error(&out, "BadComposition");
}

#[test]
fn ternary_plot_requires_three_components() {
    let dir = tempfile::tempdir().unwrap();
    let (y, x) = write_inputs(dir.path(), 4);
    let fit_dir = dir.path().join("fit");
    fs::create_dir(&fit_dir).unwrap();
    let out = run(&[
        "fit",
        "--response",
        &y.to_string_lossy(),
        "--predictor",
        &x.to_string_lossy(),
        "--out",
        &fit_dir.to_string_lossy(),
    ]);
    assert!(out.status.success());
    let out = run(&[
        "plot",
        "ternary",
        "--coefficients",
        &fit_dir.join("coefficients.csv").to_string_lossy(),
        "--out",
        &dir.path().join("t.svg").to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn alpha_zero_rejected_and_alpha_one_is_plain_fit() {
    let dir = tempfile::tempdir().unwrap();
    let (y, x) = write_inputs(dir.path(), 3);
    let out = run(&[
        "fit",
        "--response",
        &y.to_string_lossy(),
        "--predictor",
        &x.to_string_lossy(),
        "--alpha",
        "0",
        "--out",
        &dir.path().to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let plain_dir = dir.path().join("plain");
    let unit_dir = dir.path().join("unit");
    for (d, extra) in [(&plain_dir, None), (&unit_dir, Some("1"))] {
        fs::create_dir(d).unwrap();
        let mut args = vec![
            "fit".to_string(),
            "--response".into(),
            y.to_string_lossy().into_owned(),
            "--predictor".into(),
            x.to_string_lossy().into_owned(),
        ];
        if let Some(a) = extra {
            args.push("--alpha".into());
            args.push(a.into());
        }
        args.push("--out".into());
        args.push(d.to_string_lossy().into_owned());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        assert!(run(&refs).status.success());
    }
    assert_eq!(
        fs::read(plain_dir.join("coefficients.csv")).unwrap(),
        fs::read(unit_dir.join("coefficients.csv")).unwrap(),
        "alpha = 1 must reproduce the untransformed fit exactly"
    );
}
