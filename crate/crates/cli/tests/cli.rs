use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flowrmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowrmt")).args(args).output().expect("binary runs")
}

fn synth(dir: &Path) -> String {
    let out = flowrmt(&[
        "synth", "--n-core", "3", "--n-periphery", "6", "--periods", "4", "--link-prob-pp", "0.2", "--seed", "9",
        "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("flows.csv").to_str().unwrap().to_string()
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn timeseries_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = flowrmt(&["timeseries", "--input", &input, "--null-samples", "30", "--seed", "5", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    assert_eq!(ta.len(), 6);
    assert_eq!(ta, tb);
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path());
    let one = flowrmt(&["analyze", "--input", &input, "--period", "2000-Q2", "--null-samples", "40", "--workers", "1"]);
    let four = flowrmt(&["analyze", "--input", &input, "--period", "2000-Q2", "--null-samples", "40", "--workers", "4"]);
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn analyze_json_carries_result_and_null_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path());
    let out = flowrmt(&["analyze", "--input", &input, "--period", "2000-Q1", "--null-samples", "10", "--with-lambda-values"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["period"], "2000-Q1");
    assert!(v["result"]["lambda_max"].as_f64().unwrap() > 0.0);
    assert_eq!(v["null"]["lambda_values"].as_array().unwrap().len(), 10);
    assert_eq!(v["symmetrized_spectrum"]["eigenvalues"].as_array().unwrap().len(), 9);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path());
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"null_samples": 7, "seed": 3}"#).unwrap();
    let out = flowrmt(&["analyze", "--input", &input, "--period", "2000-Q1", "--config", cfg.to_str().unwrap(), "--seed", "4"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["null_samples"], 7);
    assert_eq!(v["config"]["seed"], 4);

    fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    let out = flowrmt(&["analyze", "--input", &input, "--period", "2000-Q1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path());
    let missing = flowrmt(&["timeseries", "--input", "/nonexistent/flows.csv"]);
    assert_eq!(missing.status.code(), Some(3));

    let absent_period = flowrmt(&["analyze", "--input", &input, "--period", "1999-Q4"]);
    assert_eq!(absent_period.status.code(), Some(1));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "period,reporter,counterparty,amount\n2000-Q1,AT,BE,-3\n").unwrap();
    let bad_data = flowrmt(&["timeseries", "--input", bad.to_str().unwrap()]);
    assert_eq!(bad_data.status.code(), Some(1));

    let bad_flag = flowrmt(&["analyze", "--input", &input, "--period", "2000-Q1", "--null-mode", "nope"]);
    assert_eq!(bad_flag.status.code(), Some(3));

    let bad_format = flowrmt(&["dendrogram", "--input", &input, "--period", "2000-Q1", "--format", "dot"]);
    assert_eq!(bad_format.status.code(), Some(3));
}

#[test]
fn shuffle_and_snapshot_exports() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path());
    let snap = flowrmt(&["snapshot", "--input", &input, "--period", "2000-Q3"]);
    let shuf = flowrmt(&["shuffle", "--input", &input, "--period", "2000-Q3", "--seed", "11"]);
    assert!(snap.status.success() && shuf.status.success());
    let a: serde_json::Value = serde_json::from_slice(&snap.stdout).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&shuf.stdout).unwrap();
    let positive = |v: &serde_json::Value| {
        let mut w: Vec<f64> = v["weights"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
            .filter(|&x| x > 0.0)
            .collect();
        w.sort_by(f64::total_cmp);
        w
    };
    assert_eq!(positive(&a), positive(&b));
    assert_eq!(a["entities"], b["entities"]);

    let dot = flowrmt(&["shuffle", "--input", &input, "--period", "2000-Q3", "--format", "dot"]);
    assert!(String::from_utf8(dot.stdout).unwrap().starts_with("digraph \"2000-Q3\" {"));
}

#[test]
fn dendrogram_newick_and_json_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path());
    let nwk = flowrmt(&["dendrogram", "--input", &input, "--period", "2000-Q1", "--format", "newick"]);
    let json = flowrmt(&["dendrogram", "--input", &input, "--period", "2000-Q1"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(format!("{}\n", v["newick"].as_str().unwrap()), String::from_utf8(nwk.stdout).unwrap());
    assert_eq!(v["merges"].as_array().unwrap().len(), 8);
}

#[test]
fn convert_bis_reports_and_writes_flows() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("lbs.csv");
    fs::write(
        &src,
        "TIME_PERIOD,L_REP_CTY,L_CP_COUNTRY,L_POSITION,OBS_VALUE\n\
         2010-Q1,GB,US,C,10\n\
         2010-Q1,GB,US,C,5\n\
         2010-Q1,US,GB,C,NaN\n\
         2010-Q1,US,US,C,4\n\
         2010-Q1,DE,GB,L,7\n",
    )
    .unwrap();
    let mapping = tmp.path().join("map.txt");
    fs::write(
        &mapping,
        "period=TIME_PERIOD\nreporter=L_REP_CTY\ncounterparty=L_CP_COUNTRY\nvalue=OBS_VALUE\nfilter.L_POSITION=C\nmissing=NaN\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = flowrmt(&[
        "convert-bis", "--input", src.to_str().unwrap(), "--mapping", mapping.to_str().unwrap(), "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("flows.csv")).unwrap();
    assert_eq!(csv, "period,reporter,counterparty,amount\n2010-Q1,GB,US,15\n");
    let report = String::from_utf8(out.stderr).unwrap();
    assert!(report.contains("1 filtered out") && report.contains("1 dropped as missing") && report.contains("1 self pairs"));
}
