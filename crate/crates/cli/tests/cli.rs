//! End-to-end runs of the `autobcs` binary on small fixture data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_autobcs");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Row-major entries of a BCSM file, decoded by hand.
fn bcsm_entries(path: &Path) -> (usize, usize, Vec<f64>) {
    let raw = fs::read(path).unwrap();
    assert_eq!(&raw[..4], b"BCSM");
    let m = u32::from_le_bytes(raw[8..12].try_into().unwrap()) as usize;
    let a = u32::from_le_bytes(raw[12..16].try_into().unwrap()) as usize;
    let vals = raw[17..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<_>>();
    assert_eq!(vals.len(), m * a * a);
    (m, a * a, vals)
}

fn csv_value(text: &str, key: &str) -> f64 {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key},"))).unwrap().parse().unwrap()
}

#[test]
fn analyze_matches_golden_file_and_direct_formulas() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["make-matrix", "--block", "4", "--tau", "0.5", "--seed", "3", "--out", "g.bcsm"]);
    ok(
        d,
        &[
            "analyze",
            "--matrix",
            "g.bcsm",
            "--rip-s",
            "2",
            "--mc-trials",
            "1000",
            "--bins",
            "8",
            "--out",
            "s.csv",
            "--hist",
            "h.csv",
        ],
    );
    let stats = fs::read_to_string(d.join("s.csv")).unwrap();
    assert_eq!(stats, fs::read_to_string(fixture("analyze_g4_s3.csv")).unwrap());
    assert_eq!(
        fs::read_to_string(d.join("h.csv")).unwrap(),
        fs::read_to_string(fixture("analyze_g4_s3_hist.csv")).unwrap()
    );

    // independent checks on the reported numbers
    let (m, n, b) = bcsm_entries(&d.join("g.bcsm"));
    let col = |j: usize| (0..m).map(|i| b[i * n + j]).collect::<Vec<_>>();
    let mut mu: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (u, v) = (col(i), col(j));
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            mu = mu.max(dot.abs() / (nu * nv));
        }
    }
    assert!((csv_value(&stats, "coherence") - mu).abs() < 1e-12);
    let mean = b.iter().sum::<f64>() / b.len() as f64;
    assert!((csv_value(&stats, "mean") - mean).abs() < 1e-12);
    let welch = (((n - m) as f64) / (m as f64 * (n - 1) as f64)).sqrt();
    assert!((csv_value(&stats, "welch_bound") - welch).abs() < 1e-12);
    let hist = fs::read_to_string(d.join("h.csv")).unwrap();
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, m * n);
}

#[test]
fn exact_analysis_reports_the_coherence_bound() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["make-matrix", "--kind", "bernoulli", "--block", "3", "--tau", "0.5", "--out", "b.bcsm"]);
    let out = ok(d, &["analyze", "--matrix", "b.bcsm", "--rip-s", "2", "--mc-trials", "0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rip_method,exact"));
    assert!(text.contains("bound_holds,true"));
}

#[test]
fn acquire_and_classic_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out-dir", "imgs", "--count", "1", "--height", "20", "--width", "27"]);
    ok(d, &["make-matrix", "--block", "8", "--tau", "0.5", "--seed", "1", "--out", "g.bcsm"]);
    ok(d, &["acquire", "--matrix", "g.bcsm", "--in", "imgs/synth_0000.pgm", "--out", "y.bcsy"]);
    let raw = fs::read(d.join("y.bcsy")).unwrap();
    assert_eq!(&raw[..4], b"BCSY");
    // noiseless acquisition is deterministic
    ok(d, &["acquire", "--matrix", "g.bcsm", "--in", "imgs/synth_0000.pgm", "--out", "y2.bcsy"]);
    assert_eq!(raw, fs::read(d.join("y2.bcsy")).unwrap());

    for method in ["mmse", "iht", "irls"] {
        let out = format!("{method}.pgm");
        ok(
            d,
            &[
                "reconstruct",
                "--matrix",
                "g.bcsm",
                "--method",
                method,
                "--measurements",
                "y.bcsy",
                "--out",
                &out,
                "--max-iter",
                "50",
            ],
        );
        let pgm = fs::read(d.join(&out)).unwrap();
        assert!(pgm.starts_with(b"P5\n27 20\n255\n"), "{method}");
    }
    // acquiring inline gives the same image as going through the file
    ok(
        d,
        &[
            "reconstruct",
            "--matrix",
            "g.bcsm",
            "--method",
            "mmse",
            "--in",
            "imgs/synth_0000.pgm",
            "--out",
            "inline.pgm",
        ],
    );
    assert_eq!(fs::read(d.join("inline.pgm")).unwrap(), fs::read(d.join("mmse.pgm")).unwrap());
}

#[test]
fn usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["acquire", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    // both operators at once
    assert_eq!(run(d, &["acquire", "--matrix", "a", "--model", "b", "--in", "x", "--out", "y"]).status.code(), Some(1));

    let out = run(d, &["acquire", "--matrix", "missing.bcsm", "--in", "x.pgm", "--out", "y.bcsy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x.pgm"));

    fs::write(d.join("bad.pgm"), b"P5\n4 4\n255\n\x00\x01").unwrap();
    ok(d, &["make-matrix", "--block", "4", "--tau", "0.25", "--out", "g.bcsm"]);
    let out = run(d, &["acquire", "--matrix", "g.bcsm", "--in", "bad.pgm", "--out", "y.bcsy"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("byte 13") && err.contains("bad.pgm"), "{err}");

    // a matrix without a method is a usage error
    let out = run(d, &["reconstruct", "--matrix", "g.bcsm", "--in", "bad.pgm", "--out", "o.pgm"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_export_reconstruct_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out-dir", "data", "--count", "5", "--height", "40", "--width", "40", "--seed", "9"]);
    let config = r#"{
        "network": {"block_size": 8, "tau": 0.25, "base_width": 2, "depth": 1, "octave_ratio": 0.5},
        "train": {"epochs": 2, "batch_size": 4, "seed": 1},
        "dataset": {"patch_size": 16, "patches_per_image": 3, "holdout_fraction": 0.2},
        "precision": "f64"
    }"#;
    fs::write(d.join("run.json"), config).unwrap();
    let out = ok(d, &["train", "--config", "run.json", "--data", "data", "--out", "m.abcs", "--log", "log.csv"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("holdout mean PSNR"));
    let log = fs::read_to_string(d.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert_eq!(&fs::read(d.join("m.abcs")).unwrap()[..4], b"ABCS");

    ok(d, &["export-lsm", "--model", "m.abcs", "--out", "lsm.bcsm"]);
    let (m, n, _) = bcsm_entries(&d.join("lsm.bcsm"));
    assert_eq!((m, n), (16, 64));
    let raw = fs::read(d.join("lsm.bcsm")).unwrap();
    assert_eq!(raw[16], 3, "learned kind code");

    ok(d, &["reconstruct", "--model", "m.abcs", "--in", "data/synth_0000.pgm", "--out", "r.pgm"]);
    assert!(fs::read(d.join("r.pgm")).unwrap().starts_with(b"P5\n40 40\n255\n"));
    ok(
        d,
        &[
            "acquire",
            "--model",
            "m.abcs",
            "--in",
            "data/synth_0001.pgm",
            "--out",
            "y.bcsy",
            "--noise",
            "0.02",
            "--seed",
            "4",
        ],
    );
    ok(d, &["reconstruct", "--model", "m.abcs", "--measurements", "y.bcsy", "--out", "r2.pgm"]);

    ok(d, &["make-matrix", "--block", "8", "--tau", "0.25", "--out", "g.bcsm"]);
    ok(
        d,
        &[
            "eval",
            "--in",
            "data",
            "--model",
            "m.abcs",
            "--matrix",
            "g.bcsm",
            "--matrix",
            "lsm.bcsm",
            "--method",
            "mmse,iht",
            "--noise",
            "0,0.05",
            "--out",
            "eval.csv",
            "--max-iter",
            "30",
        ],
    );
    let csv = fs::read_to_string(d.join("eval.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("image,tau,sigma_n,method,psnr,ssim"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 5 images x 2 noise levels x (2 model rows + 2 matrices x 2 methods)
    assert_eq!(rows.len(), 5 * 2 * 6);
    let methods: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[3]).collect();
    assert_eq!(
        methods.into_iter().collect::<Vec<_>>(),
        ["autobcs", "autobcs-init", "gaussian-iht", "gaussian-mmse", "learned-iht", "learned-mmse"]
    );
    assert!(rows.iter().all(|r| r[1] == "0.25" && r[4].parse::<f64>().is_ok()));

    // a config pointing at a missing dataset is a data error
    fs::write(d.join("bad.json"), r#"{"dataset": {"source": "nowhere"}}"#).unwrap();
    assert_eq!(run(d, &["train", "--config", "bad.json", "--out", "x.abcs"]).status.code(), Some(2));
    fs::write(d.join("typo.json"), r#"{"netwrk": {}}"#).unwrap();
    assert_eq!(run(d, &["train", "--config", "typo.json", "--out", "x.abcs"]).status.code(), Some(2));
}
