use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sgnn_core::synthetic::PlantedPartition;
use sgnn_core::write_dataset;

fn sgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgnn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env("SGNN_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn toy_dataset(dir: &Path) -> PathBuf {
    let ds = PlantedPartition {
        num_nodes: 150,
        num_train: 50,
        num_val: 40,
        num_test: 60,
        ..Default::default()
    }
    .generate_seeded(8)
    .unwrap();
    let path = dir.join("toy");
    write_dataset(&path, &ds).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_field(text: &str, column: &str) -> String {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == column).unwrap();
    lines.next().unwrap().split(',').nth(k).unwrap().to_string()
}

#[test]
fn zero_epochs_writes_only_the_untrained_row() {
    let tmp = tempfile::tempdir().unwrap();
    let data = toy_dataset(tmp.path());
    let out = tmp.path().join("run");
    let o = sgnn(&["train", "--dataset", s(&data), "--epochs", "0", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_f1,test_f1,epoch_sec,sampling_sec");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn training_is_reproducible_from_config_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let data = toy_dataset(tmp.path());
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, format!("# toy run\ndataset = {}\nsampler = subgraph-edge\nepochs = 4\nbatch_size = 40\n", s(&data))).unwrap();
    let strip_times = |p: PathBuf| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.split(',').take(4).collect::<Vec<_>>().join(","))
            .collect()
    };
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = sgnn(&["train", "--config", s(&cfg), "--seed", "5", "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        logs.push((strip_times(out.join("metrics.csv")), fs::read_to_string(out.join("params.txt")).unwrap()));
    }
    assert_eq!(logs[0], logs[1]);
    assert_eq!(logs[0].0.len(), 6);
}

#[test]
fn eval_reproduces_the_in_run_score_and_honors_the_split() {
    let tmp = tempfile::tempdir().unwrap();
    let data = toy_dataset(tmp.path());
    let out = tmp.path().join("run");
    let o = sgnn(&["train", "--dataset", s(&data), "--epochs", "5", "--out", s(&out), "--set", "batch_size=32"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let params = out.join("params.txt");

    let test = sgnn(&["eval", "--dataset", s(&data), "--params", s(&params)]);
    assert!(test.status.success(), "{}", String::from_utf8_lossy(&test.stderr));
    assert_eq!(csv_field(&stdout(&test), "split"), "test");
    assert_eq!(csv_field(&stdout(&test), "f1_micro"), csv_field(&summary, "test_f1"));

    let val = sgnn(&["eval", "--dataset", s(&data), "--params", s(&params), "--split", "val"]);
    assert_eq!(csv_field(&stdout(&val), "split"), "val");
    assert_eq!(csv_field(&stdout(&val), "nodes"), "40");
    assert_eq!(csv_field(&stdout(&val), "f1_micro"), csv_field(&summary, "best_val_f1"));
}

#[test]
fn eval_rejects_parameters_of_the_wrong_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let data = toy_dataset(tmp.path());
    let params = tmp.path().join("bad.txt");
    fs::write(&params, "activation relu\ndropout 0\nlayer 1 3 2\n1 2\n3 4\n5 6\n").unwrap();
    let o = sgnn(&["eval", "--dataset", s(&data), "--params", s(&params)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("shape mismatch"));
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "epochs = 3\nlearning_rat = 0.1\n").unwrap();
    let o = sgnn(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.cfg:2"));

    assert_eq!(sgnn(&["train", "--sampler", "magic"]).status.code(), Some(1));
    assert_eq!(sgnn(&["train", "--dataset", s(&tmp.path().join("missing"))]).status.code(), Some(2));
    assert_eq!(sgnn(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn lab_passes_and_replays_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = sgnn(&["lab", "--out", s(out), "--instances", "2", "--trials", "20000", "--seed", "3"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let report = fs::read(a.join("lab.csv")).unwrap();
    assert_eq!(report, fs::read(b.join("lab.csv")).unwrap());
    assert!(String::from_utf8_lossy(&report).starts_with("check,instance,metric,value,threshold,pass"));
}

#[test]
fn lab_with_injected_bias_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("lab");
    let o = sgnn(&["lab", "--out", s(&out), "--instances", "2", "--trials", "20000", "--inject-bias"]);
    assert_eq!(o.status.code(), Some(4));
    let report = fs::read_to_string(out.join("lab.csv")).unwrap();
    assert!(report.lines().any(|l| l.ends_with(",false")));
}

#[test]
fn ablate_init_writes_paired_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = toy_dataset(tmp.path());
    let out = tmp.path().join("abl");
    let o = sgnn(&["ablate-init", "--dataset", s(&data), "--epochs", "3", "--out", s(&out), "--set", "batch_size=32"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for run in ["optimistic", "pessimistic"] {
        let m = fs::read_to_string(out.join(run).join("metrics.csv")).unwrap();
        assert_eq!(m.lines().count(), 5);
    }
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert!(table.contains("optimistic,1000,"));
    assert!(table.contains("pessimistic,1,"));

    let o = sgnn(&["ablate-init", "--dataset", s(&data), "--sampler", "subgraph-node"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn prepare_converts_linqs_files() {
    let tmp = tempfile::tempdir().unwrap();
    let content = tmp.path().join("toy.content");
    let cites = tmp.path().join("toy.cites");
    let mut c = String::new();
    for i in 0..12 {
        c.push_str(&format!("p{i}\t{}\t{}\tclass{}\n", i % 2, (i + 1) % 2, i % 3));
    }
    fs::write(&content, c).unwrap();
    fs::write(&cites, "p0\tp1\np1\tp2\np3\tp0\nghost\tp4\n").unwrap();
    let out = tmp.path().join("toy");
    let o = sgnn(&[
        "prepare", "--content", s(&content), "--cites", s(&cites), "--out", s(&out), "--val", "2", "--test", "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = sgnn_core::load_dataset(&out).unwrap();
    assert_eq!(ds.graph.num_nodes(), 12);
    assert_eq!(ds.graph.num_edges(), 3);
    assert_eq!(ds.labels.num_classes(), 3);
    assert_eq!((ds.split.train().len(), ds.split.val().len(), ds.split.test().len()), (6, 2, 4));
}
