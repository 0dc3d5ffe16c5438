use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn topsom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topsom")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn rings_config(dir: &TempDir, extra: &str) -> String {
    let body = format!(
        "# small rings run\n\
         data.source = synth_rings\n\
         data.rows = 600\n\
         width = 4\n\
         height = 4\n\
         n_iters = 8\n\
         out = {}\n\
         {extra}\n",
        dir.path().join("run").display()
    );
    write_config(dir.path(), "run.cfg", &body)
}

#[test]
fn train_is_deterministic_and_eval_agrees() {
    let dir = TempDir::new().unwrap();
    let cfg = rings_config(&dir, "topology = rng");
    let first = stdout_json(&topsom(&["train", "--config", &cfg]));
    let model_path = dir.path().join("run/model.fsom");
    let bytes_a = fs::read(&model_path).unwrap();
    let second = stdout_json(&topsom(&["train", "--config", &cfg]));
    assert_eq!(bytes_a, fs::read(&model_path).unwrap());
    assert_eq!(first["qe_train"], second["qe_train"]);
    assert_eq!(first["reduce_count"], 8);

    let log = fs::read_to_string(dir.path().join("run/log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 8);
    let rec: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["iter", "eta", "sigma", "refreshed"] {
        assert!(rec.get(key).is_some(), "log record lacks {key}");
    }

    let model = model_path.to_str().unwrap();
    for (partition, key) in [("train", "qe_train"), ("holdout", "qe_holdout")] {
        let eval = stdout_json(&topsom(&["eval", "--model", model, "--config", &cfg, "--partition", partition]));
        assert_eq!(eval["qe"], first[key], "{partition}");
        assert_eq!(eval["dim"], 2);
    }
}

#[test]
fn overrides_and_workers() {
    let dir = TempDir::new().unwrap();
    let cfg = rings_config(&dir, "");
    let report = stdout_json(&topsom(&[
        "train", "--config", &cfg, "--topology", "mst", "--workers", "2", "--sampling", "random", "--rho", "0.5",
    ]));
    assert_eq!(report["topology"], "mst");
    assert_eq!(report["workers"], 2);
    assert_eq!(report["reduce_count"], 8);
    assert!(report["refresh_count"].as_u64().unwrap() >= 1);
}

#[test]
fn missing_csv_names_dataset_stage() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "data.source = csv\ndata.path = /no/such/file.csv\n");
    let out = topsom(&["train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage dataset"), "{err}");
    assert!(err.contains("/no/such/file.csv"), "{err}");
}

#[test]
fn bad_config_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "width = zero\n");
    let out = topsom(&["train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage config"));

    assert_eq!(topsom(&["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn csv_training_and_width_mismatch() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("a,b,c\n");
    for i in 0..60 {
        let v = i as f32 / 10.0;
        csv.push_str(&format!("{v},{},{}\n", v * 2.0, (i % 7) as f32));
    }
    fs::write(dir.path().join("d.csv"), &csv).unwrap();
    let body = format!(
        "data.source = csv\ndata.path = {}\ndata.header = true\nwidth = 3\nheight = 2\nn_iters = 5\nout = {}\n",
        dir.path().join("d.csv").display(),
        dir.path().join("o").display()
    );
    let cfg = write_config(dir.path(), "c.cfg", &body);
    let report = stdout_json(&topsom(&["train", "--config", &cfg]));
    assert_eq!(report["dim"], 3);
    assert_eq!(report["n_train"].as_u64().unwrap() + report["n_holdout"].as_u64().unwrap(), 60);

    fs::write(dir.path().join("narrow.csv"), "1,2\n3,4\n").unwrap();
    let model = dir.path().join("o/model.fsom");
    let out = topsom(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--csv",
        dir.path().join("narrow.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));

    fs::write(dir.path().join("ragged.csv"), "1,2,3\n4,5\n").unwrap();
    let out = topsom(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--csv",
        dir.path().join("ragged.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn shard_then_train_from_disk() {
    let dir = TempDir::new().unwrap();
    let cfg = rings_config(&dir, "");
    let shards = dir.path().join("shards");
    let out = topsom(&["shard", "--config", &cfg, "--out", shards.to_str().unwrap(), "--shards", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let n_files = fs::read_dir(&shards).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "bin")
    });
    assert_eq!(n_files.count(), 3);
    assert!(shards.join("holdout").is_dir());

    let body = format!(
        "data.source = shards\ndata.path = {}\ndata.chunk_rows = 50\nwidth = 4\nheight = 4\nn_iters = 4\nout = {}\n",
        shards.display(),
        dir.path().join("disk").display()
    );
    let disk_cfg = write_config(dir.path(), "disk.cfg", &body);
    let report = stdout_json(&topsom(&["train", "--config", &disk_cfg, "--workers", "2"]));
    assert_eq!(report["n_train"], 420);
    assert_eq!(report["n_holdout"], 180);
}

#[test]
fn tune_outputs_and_defaults_reload() {
    let dir = TempDir::new().unwrap();
    let cfg = rings_config(&dir, "");
    let out = topsom(&["tune", "--config", &cfg, "--trials", "3", "--seeds", "0,1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    let trials = fs::read_to_string(run.join("trials.jsonl")).unwrap();
    assert_eq!(trials.lines().count(), 6);
    assert_eq!(fs::read_to_string(run.join("best_per_seed.jsonl")).unwrap().lines().count(), 2);
    assert!(fs::read_to_string(run.join("pareto.jsonl")).unwrap().lines().count() >= 1);
    let stability: Value = serde_json::from_str(&fs::read_to_string(run.join("stability.json")).unwrap()).unwrap();
    assert_eq!(stability["n_seeds"], 2);

    let defaults = run.join("defaults.cfg");
    let report = stdout_json(&topsom(&[
        "train",
        "--config",
        defaults.to_str().unwrap(),
        "--out",
        dir.path().join("tuned").to_str().unwrap(),
    ]));
    assert!(report["qe_train"].as_f64().unwrap() > 0.0);
}

#[test]
fn tune_with_one_seed_fails_after_writing_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = rings_config(&dir, "");
    let out = topsom(&["tune", "--config", &cfg, "--trials", "2", "--seeds", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage tune"));
    assert!(dir.path().join("run/defaults.cfg").exists());
}

#[test]
fn bench_records() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("bench");
    let out = topsom(&[
        "bench",
        "--axis",
        "grid",
        "--values",
        "4,8",
        "--workers",
        "1,2",
        "--topology",
        "hex,rng",
        "--repeats",
        "1",
        "--base-samples",
        "400",
        "--base-dims",
        "3",
        "--iters",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records: Vec<Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 8);
    for r in &records {
        assert_eq!(r["extrapolated"], false);
        assert_eq!(r["timed_out"], false);
        assert!(r["efficiency_pct"].as_f64().unwrap() > 0.0);
        if r["G"] == 1 {
            assert_eq!(r["efficiency_pct"], 100.0);
        }
    }
    let nodes: Vec<u64> = records.iter().map(|r| r["nodes"].as_u64().unwrap()).collect();
    assert_eq!(nodes, vec![16, 16, 64, 64, 16, 16, 64, 64]);
    assert_eq!(fs::read_to_string(&out_dir).unwrap().lines().count(), 8);
}

#[test]
fn bench_without_baseline_leaves_efficiency_empty() {
    let out = topsom(&[
        "bench", "--axis", "samples", "--values", "300", "--workers", "2", "--repeats", "1", "--base-dims", "2",
        "--base-grid", "3", "--iters", "2",
    ]);
    let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rec["efficiency_pct"].is_null());
    assert_eq!(rec["extrapolated"], false);
    assert!(rec["runtime_mean_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn bench_deadline_marks_timeout() {
    let out = topsom(&[
        "bench", "--axis", "grid", "--values", "24", "--repeats", "1", "--base-samples", "20000", "--iters", "50",
        "--timeout-s", "0.01",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["timed_out"], true);
    assert!(rec["runtime_mean_s"].is_null());
}
