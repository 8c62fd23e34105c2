use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use smoothing_lab::io::{manifest_path, RunManifest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smoothing-lab"))
}

fn example(n: u32) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("examples/ex{n}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn hash(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let model = example(2);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out = run(&[
        "--seed",
        "9",
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--k",
        "5000",
        "--rounds",
        "10",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&[
        "--seed",
        "9",
        "--threads",
        "1",
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--k",
        "5000",
        "--rounds",
        "10",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(hash(&a), hash(&b));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 5001);
    assert_eq!(text.lines().next().unwrap(), "z1,z2");

    let manifest = RunManifest::read(&manifest_path(&a)).unwrap();
    assert_eq!(manifest.seed, Some(9));
    assert_eq!(manifest.parameters["k"], 5000);
    assert_eq!(manifest.output_paths, vec![a.clone()]);
}

#[test]
fn rerunning_a_manifest_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let model = example(3);
    let out_dir = dir.path().join("s");
    let args = [
        "--seed",
        "4",
        "spectrum",
        "--model",
        model.to_str().unwrap(),
        "--trials",
        "2000",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    assert!(run(&args).status.success());
    let first = hash(&out_dir.join("spectrum.csv"));
    let first_json = hash(&out_dir.join("spectrum.json"));
    assert!(run(&args).status.success());
    assert_eq!(first, hash(&out_dir.join("spectrum.csv")));
    assert_eq!(first_json, hash(&out_dir.join("spectrum.json")));
}

#[test]
fn rounds_zero_gives_init_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let status = run(&[
        "--seed",
        "1",
        "simulate",
        "--model",
        example(1).to_str().unwrap(),
        "--k",
        "10",
        "--rounds",
        "0",
        "--init",
        "0.25,0.75",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| *r == "2.5000000000000000e-1,7.5000000000000000e-1"));
}

#[test]
fn exit_codes() {
    let out = run(&["--seed", "1", "simulate", "--model", "/nonexistent/model.json", "--out", "/tmp/never.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model file not found"));

    let out = run(&["simulate", "--model", example(1).to_str().unwrap(), "--out", "/tmp/never.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dim": 2, "kind": "ExplicitAtoms", "atoms": [{"probability": 1.0, "branch": []}]}"#)
        .unwrap();
    let out = run(&["check", "--model", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // m(s) = 2 for every s: no α
    let flat = dir.path().join("flat.json");
    std::fs::write(
        &flat,
        r#"{"dim": 2, "kind": "ExplicitAtoms", "atoms": [{"probability": 1.0, "branch": [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]}]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("s");
    let out = run(&[
        "--seed",
        "1",
        "spectrum",
        "--model",
        flat.to_str().unwrap(),
        "--trials",
        "500",
        "--require-alpha",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .env("SMOOTHING_LAB_BUDGET", "5")
        .args([
            "support",
            "--model",
            example(2).to_str().unwrap(),
            "--depth",
            "4",
            "--out",
            dir.path().join("s.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn every_subcommand_succeeds_on_the_examples() {
    let dir = tempfile::tempdir().unwrap();
    for n in 1..=3 {
        let model = example(n);
        let model = model.to_str().unwrap();
        let pool = dir.path().join(format!("p{n}.csv"));
        let pool = pool.to_str().unwrap();
        let steps: Vec<Vec<String>> = vec![
            vec!["--seed", "1", "simulate", "--model", model, "--out", pool],
            vec!["--seed", "1", "spectrum", "--model", model, "--out-dir", &format!("{}/s{n}", dir.path().display())],
            vec![
                "support",
                "--model",
                model,
                "--pool",
                pool,
                "--out",
                &format!("{}/sup{n}.json", dir.path().display()),
            ],
            vec!["diagnose", "--model", model, "--pool", pool, "--out-dir", &format!("{}/d{n}", dir.path().display())],
            vec!["check", "--model", model],
        ]
        .into_iter()
        .map(|v| v.into_iter().map(String::from).collect())
        .collect();
        for args in steps {
            let out = bin().args(&args).output().unwrap();
            assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        }
    }
    let d = dir.path();

    let s1 = json(&d.join("s1/spectrum.json"));
    assert_eq!(s1["alpha"], 1.0);
    assert!(s1["a0"].is_null());
    let s2 = json(&d.join("s2/spectrum.json"));
    assert!(s2["gamma"].as_f64().unwrap() + 3.0 * s2["gamma_stderr"].as_f64().unwrap() < -(3f64.ln()));
    let s3 = json(&d.join("s3/spectrum.json"));
    let a0 = s3["a0"].as_f64().unwrap();
    assert!((2.5f64.powf(a0) + (5.0f64 / 3.0).powf(a0) - 4.0).abs() < 1e-6);

    let sup1 = json(&d.join("sup1.json"));
    assert_eq!(sup1["lambda_directions"].as_array().unwrap().len(), 2);
    let sup2 = json(&d.join("sup2.json"));
    assert_eq!(sup2["inside_fraction"], 1.0);

    let d2 = json(&d.join("d2/diagnose.json"));
    let min0 = d2["min_E_Ndelta"][0]["min_mean"].as_f64().unwrap();
    assert!(min0 > 1.0);
    let curve = std::fs::read_to_string(d.join("d2/curve.csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), "radius,sup_modulus,stderr");
    assert_eq!(curve.lines().count(), 16);
}
