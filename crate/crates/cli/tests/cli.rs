use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use psm_cli::{analyze_files, AnalysisOptions, Check};
use psm_core::dataset::{save_dataset, Dataset};
use psm_core::revealed::check_garp;
use psm_core::session::{SessionConfig, SessionState};
use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name].iter().collect()
}

fn psm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psm")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn analyze(inputs: &[&Path], extra: &[&str], out: &Path) -> (i32, Value) {
    let mut args = vec!["analyze", "--out", path(out)];
    args.extend(extra);
    args.push("--input");
    args.extend(inputs.iter().map(|p| path(p)));
    let o = psm(&args);
    let report = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    (o.status.code().unwrap(), report)
}

fn write_spec(dir: &Path, spec: Value) -> PathBuf {
    let p = dir.join("cohort.json");
    std::fs::write(&p, spec.to_string()).unwrap();
    p
}

fn simulate(spec: &Path, seed: u64, out_dir: &Path) {
    let seed = seed.to_string();
    let o = psm(&["simulate", "--cohort", path(spec), "--seed", &seed, "--out-dir", path(out_dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn respondent_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .collect();
    files.sort();
    files
}

#[test]
fn golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let (code, report) = analyze(&[&fixture("fig3.json"), &fixture("instance_v.json")], &[], &out);
    assert_eq!(code, 0);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows[0]["id"], "fig3");
    assert_eq!(rows[0]["garp_violations"], 0);
    assert_eq!(rows[0]["ccei"], 1.0);
    assert_eq!(rows[0]["afriat_peak"], json!([2, 2]));
    assert_eq!(rows[1]["garp_violations"], 2);
    assert_eq!(rows[1]["ccei_exact"], "7/9");
    assert!((rows[1]["ccei"].as_f64().unwrap() - 7.0 / 9.0).abs() < 1e-4);
    assert!(rows[1]["afriat_peak"].is_null());
    assert_eq!(report["metadata"]["garp_convention"], "cost_only");
    assert_eq!(report["summary"]["garp_violations"]["n"], 2);
}

#[test]
fn empty_input_list_is_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let (code, report) = analyze(&[], &[], &out);
    assert_eq!(code, 0);
    assert_eq!(report["rows"], json!([]));
    assert_eq!(report["summary"], json!({}));
}

#[test]
fn bad_files_are_reported_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, r#"{"scales": [10, 10], "round0": [1, 1], "observations": [], "extra": 1}"#).unwrap();
    let missing = dir.path().join("missing.json");
    let out = dir.path().join("report.json");
    let (code, report) = analyze(&[&broken, &fixture("fig3.json"), &missing], &["--checks", "garp"], &out);
    assert_eq!(code, 2);
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);
    let failures = report["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 2);
    assert!(failures[0]["file"].as_str().unwrap().ends_with("broken.json"));
    assert!(failures[1]["file"].as_str().unwrap().ends_with("missing.json"));
}

#[test]
fn unknown_check_is_a_usage_error() {
    let o = psm(&["analyze", "--checks", "garp,varian"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("varian"));
}

#[test]
fn selected_checks_only() {
    let report = analyze_files(
        &[fixture("fig3.json")],
        &AnalysisOptions::default().with_checks([Check::Ccei, Check::Garp, Check::Ccei]),
    );
    assert_eq!(report.metadata.checks, vec![Check::Garp, Check::Ccei]);
    let row = &report.rows[0];
    assert!(row.garp_violations.is_some() && row.ccei.is_some());
    assert!(row.bronars_power.is_none() && row.fit.is_none() && row.afriat_peak.is_none());
    assert_eq!("bronars".parse::<Check>(), Ok(Check::Bronars));
}

#[test]
fn noiseless_cohort_is_fully_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), json!({"random": {"count": 20}}));
    let data = dir.path().join("data");
    simulate(&spec, 4, &data);
    let files = respondent_files(&data);
    assert_eq!(files.len(), 20);
    let manifest: Value = serde_json::from_slice(&std::fs::read(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["agents"].as_array().unwrap().len(), 20);

    let out = dir.path().join("report.json");
    let inputs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    let (code, report) = analyze(&inputs, &["--checks", "garp,ccei,fit"], &out);
    assert_eq!(code, 0);
    for (row, truth) in report["rows"].as_array().unwrap().iter().zip(manifest["agents"].as_array().unwrap()) {
        assert_eq!(row["id"], truth["id"]);
        assert_eq!(row["ccei"], 1.0, "{}", row["id"]);
        assert_eq!(row["garp_violations"], 0);
        // grid answers: the fit lands near, not on, the truth
        let b_hat = row["fit"]["ideal"][0].as_f64().unwrap();
        assert!((b_hat - truth["ideal"][0].as_f64().unwrap()).abs() < 1.5);
    }
}

#[test]
fn noisy_cohort_shows_inconsistency() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), json!({"noise_sd": 2.0, "random": {"count": 20}}));
    let data = dir.path().join("data");
    simulate(&spec, 4, &data);
    let report = analyze_files(&respondent_files(&data), &AnalysisOptions::default().with_checks([Check::Ccei]));
    assert!(report.rows.iter().any(|r| r.ccei.unwrap() < 1.0));
}

#[test]
fn simulation_is_deterministic_in_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        json!({"noise_sd": 1.0, "agents": [{"theta": 1.5, "ideal": [6, 3]}], "random": {"count": 5}}),
    );
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    simulate(&spec, 11, &a);
    simulate(&spec, 11, &b);
    simulate(&spec, 12, &c);
    let read = |d: &Path| -> Vec<Vec<u8>> {
        let mut files = respondent_files(d);
        files.push(d.join("manifest.json"));
        files.iter().map(|f| std::fs::read(f).unwrap()).collect()
    };
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let manifest: Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["agents"][0]["ideal"], json!([6.0, 3.0]));
    assert_eq!(manifest["agents"][0]["file"], "respondent_001.json");
}

#[test]
fn infeasible_cohort_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for spec in [json!({}), json!({"random": {"count": 2, "theta": [0, 1]}}), json!({"agents": [{"theta": -1, "ideal": [1, 1]}]})] {
        let p = write_spec(dir.path(), spec.clone());
        let o = psm(&["simulate", "--cohort", path(&p), "--out-dir", path(&dir.path().join("x"))]);
        assert!(!o.status.success(), "{spec}");
    }
}

/// Linear interpolation read off the empirical points `(i / (n - 1), x_(i))`.
fn interpolated(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.len() == 1 {
        return v[0];
    }
    let step = 1.0 / (v.len() - 1) as f64;
    let i = v.iter().enumerate().rposition(|(i, _)| i as f64 * step <= p + 1e-12).unwrap();
    if i + 1 == v.len() {
        return v[i];
    }
    let t = (p - i as f64 * step) / step;
    v[i] * (1.0 - t) + v[i + 1] * t
}

#[test]
fn reports_are_reproducible_and_summaries_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), json!({"noise_sd": 1.5, "random": {"count": 12}}));
    let data = dir.path().join("data");
    simulate(&spec, 8, &data);
    let files = respondent_files(&data);
    let inputs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    let extra = ["--bronars-trials", "300", "--seed", "5", "--csv"];
    let (r1, r2) = (dir.path().join("r1.json"), dir.path().join("r2.json"));
    let csv = dir.path().join("rows.csv");
    let mut args: Vec<&str> = extra.to_vec();
    args.push(path(&csv));
    analyze(&inputs, &args, &r1);
    analyze(&inputs, &args, &r2);
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());

    let report: Value = serde_json::from_slice(&std::fs::read(&r1).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    for column in ["ccei", "bronars_power", "garp_violations"] {
        let values: Vec<f64> = rows.iter().map(|r| r[column].as_f64().unwrap()).collect();
        let s = &report["summary"][column];
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        assert!((s["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
        assert!((s["std"].as_f64().unwrap() - var.sqrt()).abs() < 1e-12);
        for (key, p) in [("p5", 0.05), ("p25", 0.25), ("p50", 0.5), ("p75", 0.75), ("p95", 0.95)] {
            assert!((s[key].as_f64().unwrap() - interpolated(&values, p)).abs() < 1e-12, "{column} {key}");
        }
    }

    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "id");
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), rows.len());
    assert_eq!(&records[3][0], rows[3]["id"].as_str().unwrap());

    // reversed input, reversed rows
    let reversed: Vec<&Path> = inputs.iter().rev().copied().collect();
    let (_, back) = analyze(&reversed, &["--checks", "garp"], &dir.path().join("r3.json"));
    let ids: Vec<&Value> = back["rows"].as_array().unwrap().iter().map(|r| &r["id"]).collect();
    let forward: Vec<&Value> = rows.iter().rev().map(|r| &r["id"]).collect();
    assert_eq!(ids, forward);
}

#[test]
fn afriat_grid_for_plotting() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.json");
    let o = psm(&["afriat", "--input", path(&fixture("fig3.json")), "--eval-grid", "--out", path(&out)]);
    assert!(o.status.success());
    let g: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(g["u_levels"], json!([[1, 1], [1, 1], [1, 1], [1, 1]]));
    assert_eq!(g["peak"]["answer"], json!([2, 2]));
    assert_eq!(g["single_peaked"], true);
    let grid = g["grid"].as_array().unwrap();
    assert_eq!(grid.len(), 25);
    // lower-left region: x + y - 1
    assert_eq!(grid[0], json!({"answer": [0, 0], "value": -1.0}));
    assert_eq!(grid[6], json!({"answer": [1, 1], "value": 1.0}));
    assert_eq!(grid[24], json!({"answer": [4, 4], "value": -1.0}));

    let o = psm(&["afriat", "--input", path(&fixture("fig3.json")), "--out", path(&out)]);
    assert!(o.status.success());
    let g: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(g.get("grid").is_none());

    let o = psm(&["afriat", "--input", path(&fixture("instance_v.json"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("GARP"));
}

#[tokio::test(flavor = "multi_thread")]
async fn service_export_reanalyzes_like_the_session_data() {
    let dir = tempfile::tempdir().unwrap();
    let state = psm_service::AppState::open(dir.path().join("events.ndjson")).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let server = tokio::spawn(psm_service::serve_on(listener, state));
    let client = reqwest::Client::new();

    let created: Value = client
        .post(format!("{base}/sessions"))
        .json(&json!({"shuffle_seed": 13}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let id = created["session_id"].as_str().unwrap();
    let mut offline = SessionState::new(SessionConfig { shuffle_seed: 13, ..SessionConfig::default() }).unwrap();
    let post = |round: usize, q: Vec<u32>| {
        client.post(format!("{base}/sessions/{id}/answer")).json(&json!({"round": round, "answer": q})).send()
    };
    offline.submit(0, vec![7, 2]).unwrap();
    post(0, vec![7, 2]).await.unwrap();
    // alternate between the two ends of each frontier so some pairs cross
    let mut flip = false;
    while let Some(index) = offline.current_round() {
        let set = &offline.round(index).unwrap().set;
        let affordable: Vec<_> = offline.space().points().filter(|q| set.contains_in(offline.space(), q)).collect();
        let q = if flip { affordable[0].clone() } else { affordable.last().unwrap().clone() };
        flip = !flip;
        offline.submit(index, q.values().to_vec()).unwrap();
        post(index, q.into_values()).await.unwrap();
    }
    let bytes = client.get(format!("{base}/sessions/{id}/export")).send().await.unwrap().bytes().await.unwrap();
    server.abort();

    let file = dir.path().join("export.json");
    std::fs::write(&file, &bytes).unwrap();
    let direct = offline.to_dataset().unwrap();
    assert_eq!(bytes.to_vec(), save_dataset(&direct).unwrap());
    let (code, report) = analyze(&[&file], &["--checks", "garp"], &dir.path().join("report.json"));
    assert_eq!(code, 0);
    let garp = check_garp(&Dataset::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap());
    assert_eq!(garp, check_garp(&direct));
    assert_eq!(report["rows"][0]["garp_violations"], json!(garp.count));
}
