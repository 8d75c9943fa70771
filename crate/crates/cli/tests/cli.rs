use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dshift(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dshift"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = dshift(dir, args);
    assert!(
        out.status.success(),
        "dshift {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Synthetic corpus, expanded test instances and candidate sets.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "data", "--train", "150", "--dev", "20", "--test", "20"]);
    ok(d, &["expand", "--in", "data/test.jsonl", "--out", "test.jsonl"]);
    ok(d, &["candidates", "--in", "test.jsonl", "--out", "cand.jsonl", "--seed", "1"]);
    dir
}

const WORD_DATA: [&str; 4] = ["--lexicon", "data/lexicon.jsonl", "--stats", "data/vocab.jsonl"];

#[test]
fn usage_errors_exit_2_without_output() {
    let dir = workspace();
    let d = dir.path();
    for args in [
        &["shift", "--in", "test.jsonl", "--out", "x.jsonl", "--method", "ic", "--ratio", "2/6", "--bucket", "2"][..],
        &["shift", "--in", "test.jsonl", "--out", "x.jsonl", "--method", "uw", "--ratio", "0.2", "--bucket", "2",
          "--lexicon", "l", "--stats", "s"],
        &["shift", "--in", "test.jsonl", "--out", "x.jsonl", "--method", "sr"],
        &["shift", "--in", "test.jsonl", "--out", "x.jsonl", "--method", "ic", "--ratio", "0.3"],
        &["shift", "--in", "missing.jsonl", "--out", "x.jsonl", "--method", "zz"],
        &["candidates", "--in", "test.jsonl", "--out", "x.jsonl", "--k", "1"],
    ] {
        let out = dshift(d, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!d.join("x.jsonl").exists());
        assert!(!d.join("x.jsonl.manifest.json").exists());
    }
}

#[test]
fn validation_errors_exit_1_without_output() {
    let dir = workspace();
    let d = dir.path();
    let out = dshift(d, &["shift", "--in", "test.jsonl", "--out", "ic.jsonl", "--method", "ic", "--ratio", "2/6"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("filter to one length first"));
    assert!(!d.join("ic.jsonl").exists());
    let out = dshift(d, &["expand", "--in", "nope.jsonl", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(fs::read_dir(d).unwrap().count(), 5);
}

#[test]
fn shift_reruns_are_byte_identical() {
    let dir = workspace();
    let d = dir.path();
    let mut args = vec!["shift", "--in", "test.jsonl", "--method", "uw", "--ratio", "0.20", "--seed", "1"];
    args.extend(WORD_DATA);
    let mut a = args.clone();
    a.extend(["--out", "a.jsonl"]);
    let mut b = args.clone();
    b.extend(["--out", "b.jsonl"]);
    ok(d, &a);
    ok(d, &b);
    assert_eq!(fs::read(d.join("a.jsonl")).unwrap(), fs::read(d.join("b.jsonl")).unwrap());
    let m: Value = serde_json::from_slice(&fs::read(d.join("a.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "shift");
    assert_eq!(m["seed"], 1);
    assert_eq!(m["flags"]["ratio"], "0.20");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(m["outputs"][1]["path"], "a.jsonl.stats.json");
}

#[test]
fn kw_stats_sidecar_schema() {
    let dir = workspace();
    let d = dir.path();
    let mut args = vec!["shift", "--in", "test.jsonl", "--out", "kw.jsonl", "--method", "kw", "--ratio", "0.10",
                        "--known-threshold", "5000"];
    args.extend(WORD_DATA);
    ok(d, &args);
    let stats: Value = serde_json::from_str(&fs::read_to_string(d.join("kw.jsonl.stats.json")).unwrap()).unwrap();
    for field in ["kept", "dropped", "avg_replacements"] {
        assert!(stats.get(field).is_some(), "{field}");
    }
    let total = jsonl(&d.join("test.jsonl")).len() as u64;
    assert_eq!(stats["kept"].as_u64().unwrap() + stats["dropped"].as_u64().unwrap(), total);
    assert_eq!(jsonl(&d.join("kw.jsonl")).len() as u64, stats["kept"].as_u64().unwrap());
}

#[test]
fn ic_and_sr_after_length_filter() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["expand", "--in", "data/test.jsonl", "--out", "t3.jsonl", "--turns", "3"]);
    ok(d, &["shift", "--in", "t3.jsonl", "--out", "ic.jsonl", "--method", "ic", "--ratio", "2/3"]);
    let src = jsonl(&d.join("t3.jsonl"));
    let out = jsonl(&d.join("ic.jsonl"));
    assert_eq!(src.len(), out.len());
    for (s, o) in src.iter().zip(&out) {
        assert_eq!(o["context"].as_array().unwrap()[..], s["context"].as_array().unwrap()[2..]);
        assert_eq!(o["provenance"]["shift_tag"], "ic:r=2/3");
    }
    ok(d, &["shift", "--in", "test.jsonl", "--out", "sr.jsonl", "--method", "sr", "--turns", "3"]);
    assert_eq!(jsonl(&d.join("sr.jsonl")).len(), src.len());
}

fn scored(d: &Path) {
    ok(d, &["score", "--in", "test.jsonl", "--candidates", "cand.jsonl", "--out", "pred.jsonl"]);
}

#[test]
fn eval_reports_missing_id() {
    let dir = workspace();
    let d = dir.path();
    scored(d);
    let preds = jsonl(&d.join("pred.jsonl"));
    let victim = preds[preds.len() / 2]["instance_id"].as_str().unwrap().to_string();
    let kept: String = preds
        .iter()
        .filter(|p| !(p["method"] == "vanilla" && p["instance_id"] == victim.as_str()))
        .map(|p| format!("{p}\n"))
        .collect();
    fs::write(d.join("holey.jsonl"), kept).unwrap();
    let out = dshift(d, &["eval", "--in", "holey.jsonl", "--candidates", "cand.jsonl", "--out", "r.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&victim));
    assert!(!d.join("r.jsonl").exists());
}

#[test]
fn single_bin_ece_identity_and_temperature_row() {
    let dir = workspace();
    let d = dir.path();
    scored(d);
    fs::write(d.join("t.json"), "{\"temperature\": 2.5, \"nll\": 0.0}\n").unwrap();
    ok(d, &["eval", "--in", "pred.jsonl", "--candidates", "cand.jsonl", "--out", "r.jsonl", "--ece-bins", "1",
            "--temperature", "t.json"]);
    let rows = jsonl(&d.join("r.jsonl"));
    let methods: Vec<&str> = rows.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["vanilla", "temp_scaling", "dropout", "ensemble"]);
    assert_eq!(rows[0]["acc"], rows[1]["acc"]);
    assert_ne!(rows[0]["brier"], rows[1]["brier"]);

    let mut conf = 0.0;
    let mut n = 0.0;
    for p in jsonl(&d.join("pred.jsonl")).iter().filter(|p| p["method"] == "vanilla") {
        let z: Vec<f64> = p["logits"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        conf += 1.0 / z.iter().map(|v| (v - m).exp()).sum::<f64>();
        n += 1.0;
    }
    let acc = rows[0]["acc"].as_f64().unwrap();
    let ece = rows[0]["ece"].as_f64().unwrap();
    assert!((ece - (acc - conf / n).abs()).abs() < 1e-12);
}

#[test]
fn report_ic_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut body = String::new();
    for k in 0..6 {
        for m in ["vanilla", "temp_scaling", "dropout", "ensemble"] {
            body.push_str(&format!(
                "{{\"method\":\"{m}\",\"shift_tag\":\"ic:r={k}/6\",\"n\":10,\"acc\":0.5,\"brier\":0.6,\"ece\":0.1}}\n"
            ));
        }
    }
    fs::write(d.join("a.jsonl"), body).unwrap();
    ok(d, &["report", "--in", "a.jsonl", "--out", "t.md"]);
    let md = fs::read_to_string(d.join("t.md")).unwrap();
    assert_eq!(md.lines().count(), 2 + 6);
    assert_eq!(md.lines().next().unwrap().split('|').count() - 3, 12);
    assert_eq!(fs::read_to_string(d.join("t.md.curves.csv")).unwrap().lines().count(), 1 + 6 * 4 * 3);

    fs::write(d.join("b.jsonl"), "{\"method\":\"vanilla\",\"shift_tag\":\"ic:r=9/6\",\"n\":1,\"acc\":1,\"brier\":0,\"ece\":0}\n").unwrap();
    let out = dshift(d, &["report", "--in", "a.jsonl", "b.jsonl", "--out", "u.md"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn external_predictions_and_importance_files() {
    let dir = workspace();
    let d = dir.path();
    let sets = jsonl(&d.join("cand.jsonl"));
    let mut preds = String::new();
    for s in &sets {
        let id = s["instance_id"].as_str().unwrap();
        let k = s["candidates"].as_array().unwrap().len();
        let gold = s["gold_index"].as_u64().unwrap() as usize;
        let logits: Vec<f64> = (0..k).map(|i| if i == gold { 2.0 } else { 0.0 }).collect();
        for member in 0..2 {
            for pass in 0..3 {
                let rec = serde_json::json!({"instance_id": id, "logits": logits, "method": "bert",
                                             "member": member, "pass": pass});
                preds.push_str(&format!("{rec}\n"));
            }
        }
    }
    fs::write(d.join("ext.jsonl"), preds).unwrap();
    ok(d, &["eval", "--in", "ext.jsonl", "--candidates", "cand.jsonl", "--out", "r.jsonl"]);
    let rows = jsonl(&d.join("r.jsonl"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["acc"], 1.0);

    let inst = jsonl(&d.join("test.jsonl"));
    let mut imp = String::new();
    for i in &inst {
        let n: usize = i["context"]
            .as_array()
            .unwrap()
            .iter()
            .map(|u| dshift::corpus::tokenize(u.as_str().unwrap()).len())
            .sum();
        let scores: Vec<f64> = (0..n).map(|j| j as f64 / n.max(1) as f64).collect();
        imp.push_str(&format!("{}\n", serde_json::json!({"id": i["id"], "scores": scores})));
    }
    fs::write(d.join("imp.jsonl"), &imp).unwrap();
    let mut args = vec!["shift", "--in", "test.jsonl", "--out", "b5.jsonl", "--method", "uw", "--bucket", "5",
                        "--importance", "imp.jsonl"];
    args.extend(WORD_DATA);
    ok(d, &args);
    for i in jsonl(&d.join("b5.jsonl")) {
        assert_eq!(i["provenance"]["shift_tag"], "uw:b=5");
    }

    let truncated: String = imp.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(d.join("imp.jsonl"), truncated).unwrap();
    let out = dshift(d, &args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
}

#[test]
fn fit_temp_record_feeds_eval() {
    let dir = workspace();
    let d = dir.path();
    scored(d);
    ok(d, &["fit-temp", "--in", "pred.jsonl", "--candidates", "cand.jsonl", "--out", "t.json"]);
    let t: Value = serde_json::from_str(&fs::read_to_string(d.join("t.json")).unwrap()).unwrap();
    let value = t["temperature"].as_f64().unwrap();
    assert!((0.05..=10.0).contains(&value));
    assert!(t["nll"].as_f64().unwrap().is_finite());
    ok(d, &["eval", "--in", "pred.jsonl", "--candidates", "cand.jsonl", "--out", "r.jsonl", "--temperature", "t.json",
            "--ece-mode", "percandidate"]);
    assert_eq!(jsonl(&d.join("r.jsonl")).len(), 4);
}
