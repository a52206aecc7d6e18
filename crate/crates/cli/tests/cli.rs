use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use agfusion_core::ingest::{read_jsonl, save_jsonl};
use tempfile::TempDir;

fn agfusion(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agfusion"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn agfusion")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = agfusion(dir, args);
    assert!(
        out.status.success(),
        "agfusion {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_dataset(dir: &Path) {
    ok(dir, &["synth", "--preset", "small", "--out", "d.jsonl"]);
}

const FAST: [&str; 4] = ["--max-iter", "40", "--standardize", "--dataset=d.jsonl"];

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(agfusion(tmp.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(agfusion(tmp.path(), &["cv", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(agfusion(tmp.path(), &["count-ops", "--pipeline", "svm"]).status.code(), Some(2));
}

#[test]
fn bad_data_exits_1_with_a_report() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(agfusion(dir, &["cv", "--dataset", "missing.jsonl", "--out", "r"]).status.code(), Some(1));

    small_dataset(dir);
    let mut text = fs::read_to_string(dir.join("d.jsonl")).unwrap();
    text.push_str("{\"animal_id\": \"x\"}\n");
    fs::write(dir.join("bad.jsonl"), text).unwrap();
    let out = agfusion(dir, &["convert", "--dataset", "bad.jsonl", "--out", "c.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.join("c.jsonl.validation.txt").exists());

    ok(dir, &["convert", "--dataset", "bad.jsonl", "--skip-invalid", "--out", "c.jsonl"]);
    let (kept, report) = read_jsonl(dir.join("c.jsonl")).unwrap();
    assert!(report.is_empty());
    assert_eq!(kept.len(), 600);
}

#[test]
fn cv_then_report_reproduces_the_table() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    let mut args = vec!["cv", "--pipeline", "acc", "--out", "run"];
    args.extend(FAST);
    ok(dir, &args);
    for f in ["result.json", "mcc.csv", "config.json", "meta.json"] {
        assert!(dir.join("run").join(f).exists(), "{f}");
    }
    let report = ok(dir, &["report", "--run", "run"]);
    let table = String::from_utf8(report.stdout).unwrap();
    assert_eq!(table, fs::read_to_string(dir.join("run/mcc.csv")).unwrap());
    assert!(table.starts_with("behavior,Acc\n"));
    assert_eq!(table.lines().count(), 7);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    for (jobs, out) in [("1", "j1"), ("4", "j4")] {
        let mut args = vec!["--jobs", jobs, "cv", "--pipeline", "pf", "--repeats", "2", "--out", out];
        args.extend(FAST);
        ok(dir, &args);
    }
    for f in ["result.json", "mcc.csv", "config.json"] {
        let a = fs::read(dir.join("j1").join(f)).unwrap();
        let b = fs::read(dir.join("j4").join(f)).unwrap();
        assert!(a == b, "{f} differs between --jobs 1 and --jobs 4");
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    fs::write(
        dir.join("run.toml"),
        "dataset = \"d.jsonl\"\nout = \"from-config\"\npipeline = \"gnss\"\nrepeats = 3\n\n[gnss_model]\nmax_iter = 20\nl2_lambda = 0.5\n",
    )
    .unwrap();
    ok(dir, &["--config", "run.toml", "cv", "--repeats", "1", "--lambda", "0.01"]);
    let cfg: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("from-config/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["pipeline"], "gnss");
    assert_eq!(cfg["repeats"], 1);
    assert_eq!(cfg["gnss_model"]["l2_lambda"], 0.01);
    assert_eq!(cfg["gnss_model"]["max_iter"], 20);
}

#[test]
fn shipped_configs_load() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = TempDir::new().unwrap();
    small_dataset(tmp.path());
    let mut n = 0;
    for entry in fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            n += 1;
            let cfg = path.to_str().unwrap();
            ok(tmp.path(), &["--config", cfg, "features", "--dataset", "d.jsonl", "--out", "f.csv"]);
        }
    }
    assert_eq!(n, 8);
}

#[test]
fn count_ops_profiles() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["count-ops", "--pipeline", "fc", "--dataset-profile", "arm20e"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("parameters,153\n"), "{text}");
    assert!(text.contains("sum_of_operations,315\n"), "{text}");

    let out = ok(tmp.path(), &["count-ops"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("parameters,32,55,98,92,98,153,135\n"), "{text}");
}

#[test]
fn pf_falls_back_where_fc_fails() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    for p in ["pf", "fc"] {
        let mut args = vec!["train", "--pipeline", p, "--out"];
        let name = format!("{p}.json");
        args.push(&name);
        args.extend(FAST);
        ok(dir, &args);
    }
    let (mut data, _) = read_jsonl(dir.join("d.jsonl")).unwrap();
    for dp in data.iter_mut().step_by(5) {
        dp.gnss.clear();
    }
    save_jsonl(dir.join("holes.jsonl"), &data).unwrap();

    ok(dir, &["infer", "--model", "pf.json", "--dataset", "holes.jsonl", "--out", "pf.csv"]);
    let pf = fs::read_to_string(dir.join("pf.csv")).unwrap();
    let rows: Vec<&str> = pf.lines().skip(1).collect();
    assert_eq!(rows.len(), 600);
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<&str> = row.split(',').collect();
        assert!(!cells[4].is_empty());
        assert_eq!(cells[5], if i % 5 == 0 { "true" } else { "false" });
    }

    let out = agfusion(dir, &["infer", "--model", "fc.json", "--dataset", "holes.jsonl", "--out", "fc.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let fc = fs::read_to_string(dir.join("fc.csv")).unwrap();
    for (i, row) in fc.lines().skip(1).enumerate() {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[7].is_empty(), i % 5 != 0, "row {i}: {row}");
    }
}

#[test]
fn ablate_writes_one_column_per_subset() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    let mut args = vec!["ablate", "--subsets", "all,none", "--out", "abl"];
    args.extend(FAST);
    ok(dir, &args);
    let csv = fs::read_to_string(dir.join("abl/ablation.csv")).unwrap();
    assert!(csv.starts_with("behavior,all,none\n"), "{csv}");
    let report = ok(dir, &["report", "--run", "abl"]);
    assert_eq!(String::from_utf8(report.stdout).unwrap(), csv);
}
