//! Black-box tests of the command line interface: files in, files out,
//! exit codes, and the human-readable summaries.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_toepcov"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Deterministic standard normals: Box-Muller over a 64-bit LCG.
fn normals(seed: u64, count: usize) -> Vec<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    let mut uniform = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    };
    let mut out = Vec::with_capacity(count + 1);
    while out.len() < count {
        let (u, v) = (uniform(), uniform());
        let r = (-2.0 * u.ln()).sqrt();
        let angle = std::f64::consts::TAU * v;
        out.push(r * angle.cos());
        out.push(r * angle.sin());
    }
    out.truncate(count);
    out
}

fn write_white_noise(path: &Path, seed: u64, n: usize, p: usize) {
    let values = normals(seed, n * p);
    let mut text = String::new();
    for row in values.chunks(p) {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn read_row(path: &Path) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    text.trim()
        .split(',')
        .map(|f| f.parse().unwrap())
        .collect()
}

#[test]
fn estimate_recovers_the_white_noise_variance() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("noise.csv");
    let output = dir.path().join("sigma.csv");
    write_white_noise(&input, 7, 4, 2048);

    let out = run(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let row = read_row(&output);
    assert_eq!(row.len(), 2048);
    assert!(
        (row[0] - 1.0).abs() < 0.1,
        "sigma_0 = {} should be close to 1",
        row[0]
    );
    let tail = row[row.len() / 2..]
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    assert!(tail < 0.05, "distant covariances {tail} should be near zero");

    // Provenance lands next to the output by default.
    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sigma.provenance.json")).unwrap())
            .unwrap();
    assert_eq!(prov["q"], 2);
    assert_eq!(prov["selector"], "gcv");
    assert!(prov["h"].as_f64().unwrap() > 0.0);
    assert!(prov["t"].as_u64().unwrap() >= 2);
}

#[test]
fn estimate_echoes_the_pipeline_flags_into_provenance() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("noise.csv");
    let output = dir.path().join("sigma.csv");
    let prov_path = dir.path().join("prov.json");
    write_white_noise(&input, 11, 2, 2048);

    let out = run(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--provenance",
        prov_path.to_str().unwrap(),
        "--T",
        "500",
        "--q",
        "2",
        "--selector",
        "gcv",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("T=500"));

    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&prov_path).unwrap()).unwrap();
    assert_eq!(prov["t"], 500);
    assert_eq!(prov["q"], 2);
    assert_eq!(prov["selector"], "gcv");
    // 2048 transform frequencies split into 500 bins, 4 frequencies wide,
    // pooling both rows: m = 8 energies per bin, 2048 - 500 * 4 = 48
    // trailing frequencies dropped.
    assert_eq!(prov["m"], 8);
    assert_eq!(prov["discarded"], 48);
}

#[test]
fn estimated_covariance_survives_a_csv_round_trip() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("noise.csv");
    let output = dir.path().join("sigma.csv");
    write_white_noise(&input, 13, 2, 512);

    let out = run(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    // Values are written in the shortest representation that parses back
    // to the same float, so a parse-and-reformat cycle is the identity.
    let text = fs::read_to_string(&output).unwrap();
    for field in text.trim().split(',') {
        let value: f64 = field.parse().unwrap();
        assert_eq!(format!("{value}"), field);
    }
}

#[test]
fn malformed_csv_names_the_offending_cell() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.csv");
    let output = dir.path().join("sigma.csv");
    fs::write(&input, "1.0,2.0,3.0\n4.0,oops,6.0\n").unwrap();

    let out = run(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    let err = stderr(&out);
    assert!(err.contains("line 2"), "stderr: {err}");
    assert!(err.contains("field 2"), "stderr: {err}");
}

#[test]
fn empty_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("empty.csv");
    let output = dir.path().join("sigma.csv");
    fs::write(&input, "").unwrap();

    let out = run(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn missing_input_file_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "estimate",
        "--input",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--output",
        dir.path().join("sigma.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn unknown_flags_are_usage_errors() {
    let out = run(&["estimate", "--frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fixed_selector_demands_a_bandwidth() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("noise.csv");
    write_white_noise(&input, 3, 1, 256);

    let out = run(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--output",
        dir.path().join("sigma.csv").to_str().unwrap(),
        "--selector",
        "fixed",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--h"), "stderr: {}", stderr(&out));

    // The reverse: a bandwidth without the fixed selector is also refused.
    let out = run(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--output",
        dir.path().join("sigma2.csv").to_str().unwrap(),
        "--h",
        "0.1",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn precision_of_white_noise_is_near_the_identity() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("noise.csv");
    let output = dir.path().join("omega.csv");
    write_white_noise(&input, 17, 4, 1024);

    let out = run(&[
        "precision",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let row = read_row(&output);
    assert_eq!(row.len(), 1024);
    assert!((row[0] - 1.0).abs() < 0.15, "omega_0 = {}", row[0]);
}

#[test]
fn density_grid_covers_zero_to_pi() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("noise.csv");
    let output = dir.path().join("density.csv");
    write_white_noise(&input, 23, 2, 512);

    let out = run(&[
        "density",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--grid",
        "64",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let text = fs::read_to_string(&output).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .map(|l| {
            let mut it = l.split(',');
            (
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows.len(), 65);
    assert_eq!(rows[0].0, 0.0);
    assert!((rows[64].0 - std::f64::consts::PI).abs() < 1e-12);
    for &(_, f) in &rows {
        assert!(f > 0.0, "density values stay positive");
    }
}

#[test]
fn simulate_writes_report_and_summary_table() {
    let dir = TempDir::new().unwrap();
    let report_path = dir.path().join("report.json");

    let out = run(&[
        "simulate",
        "--process",
        "ar2",
        "--p",
        "64",
        "--n",
        "2",
        "--reps",
        "2",
        "--seed",
        "1",
        "--methods",
        "sample",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let table = stdout(&out);
    assert!(table.starts_with("method,"), "table: {table}");
    assert_eq!(table.lines().count(), 2, "one method row expected");
    assert!(table.lines().nth(1).unwrap().starts_with("sample,"));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["p"], 64);
    assert_eq!(report["per_rep"].as_array().unwrap().len(), 2);

    // The summary CSV lands next to the JSON by default.
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv, table);
}

#[test]
fn simulate_rejects_impossible_scenarios() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "simulate",
        "--process",
        "ar2",
        "--p",
        "64",
        "--n",
        "1",
        "--reps",
        "0",
        "--seed",
        "1",
        "--methods",
        "sample",
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("reps"), "stderr: {}", stderr(&out));
}

#[test]
fn simulate_accepts_a_scenario_file_with_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let scenario_path = dir.path().join("scenario.json");
    fs::write(
        &scenario_path,
        r#"{
            "label": "smoke",
            "process": "poly-decay",
            "p": 64,
            "n": 2,
            "reps": 3,
            "seed": 5,
            "methods": ["sample"]
        }"#,
    )
    .unwrap();
    let report_path = dir.path().join("report.json");

    let out = run(&[
        "simulate",
        "--scenario",
        scenario_path.to_str().unwrap(),
        "--reps",
        "2",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["label"], "smoke");
    assert_eq!(report["reps"], 2, "flag overrides the file");
    assert_eq!(report["process"], "poly-decay");
}

fn strip_timing(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("seconds");
            map.remove("mean_seconds");
            for child in map.values_mut() {
                strip_timing(child);
            }
        }
        serde_json::Value::Array(items) => {
            for child in items {
                strip_timing(child);
            }
        }
        _ => {}
    }
}

fn report_without_timing(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    strip_timing(&mut v);
    v
}

#[test]
fn thread_count_never_changes_the_numbers() {
    let dir = TempDir::new().unwrap();
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--process".into(),
            "ar2".into(),
            "--p".into(),
            "128".into(),
            "--n".into(),
            "4".into(),
            "--reps".into(),
            "4".into(),
            "--seed".into(),
            "9".into(),
            "--cv-splits".into(),
            "5".into(),
            "--methods".into(),
            "spectral-gcv,sample,taper-cv".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };

    let one = dir.path().join("one.json");
    let two = dir.path().join("two.json");
    let env = dir.path().join("env.json");

    let out1 = bin().args(args(&one)).args(["--threads", "1"]).output().unwrap();
    assert_eq!(code(&out1), 0, "stderr: {}", stderr(&out1));
    let out2 = bin().args(args(&two)).args(["--threads", "2"]).output().unwrap();
    assert_eq!(code(&out2), 0, "stderr: {}", stderr(&out2));
    let out3 = bin()
        .args(args(&env))
        .env("TOEPCOV_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&out3), 0, "stderr: {}", stderr(&out3));

    let a = report_without_timing(&one);
    let b = report_without_timing(&two);
    let c = report_without_timing(&env);
    assert_eq!(a, b, "--threads 1 vs --threads 2");
    assert_eq!(a, c, "--threads 1 vs TOEPCOV_THREADS=3");
}

#[test]
fn diagnose_writes_one_file_per_bin_count() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("noise.csv");
    write_white_noise(&input, 29, 2, 512);
    let prefix = dir.path().join("qq");

    let out = run(&[
        "diagnose",
        "--input",
        input.to_str().unwrap(),
        "--out-prefix",
        prefix.to_str().unwrap(),
        "--T",
        "32,64,128",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let text = stdout(&out);
    assert_eq!(
        text.matches("max |empirical - theoretical|").count(),
        3,
        "stdout: {text}"
    );
    for t in [32, 64, 128] {
        let path = dir.path().join(format!("qq_T{t}.csv"));
        let body = fs::read_to_string(&path).unwrap();
        assert!(body.lines().count() >= t - 2, "QQ file for T={t} is full");
    }
}

#[test]
fn whittle_reports_both_likelihoods() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("noise.csv");
    write_white_noise(&input, 31, 2, 512);
    let json_path = dir.path().join("nll.json");

    let out = run(&[
        "whittle",
        "--input",
        input.to_str().unwrap(),
        "--process",
        "poly-decay",
        "--json",
        json_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("dct_whittle_nll = "), "stdout: {text}");
    assert!(text.contains("classical_whittle_nll = "), "stdout: {text}");

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    assert!(json["dct_whittle_nll"].as_f64().unwrap().is_finite());
    assert!(json["classical_whittle_nll"].as_f64().unwrap().is_finite());
}
