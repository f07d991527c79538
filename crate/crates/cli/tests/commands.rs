use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fraudgt_cli::commands::{
    cmd_ablate, cmd_evaluate, cmd_generate, cmd_train, load_data, report_for_scores, ABLATION_FILE, CHECKPOINT_FILE,
    LOG_FILE, PARTIAL_CHECKPOINT_FILE,
};
use fraudgt_cli::config::RunConfig;
use fraudgt_cli::{EXIT_CONFIG, EXIT_DATA, EXIT_IO, EXIT_NUMERIC};
use fraudgt_core::{Checkpoint, Label, ModelParams, SynthConfig};

fn small() -> RunConfig {
    let mut c = RunConfig::default();
    c.apply_text(
        "synth.n_transactions = 300\n\
         gnn.dim = 4\n\
         gnn.layers = 1\n\
         attn.heads = 2\n\
         attn.ffn_mult = 1\n\
         train.epochs = 3\n\
         train.lr = 0.01\n",
    )
    .unwrap();
    c
}

fn generated(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let csv = dir.join("data.csv");
    cmd_generate(cfg, &csv).unwrap();
    csv
}

fn without_wall_time(log: &str) -> String {
    log.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn generate_writes_header_rows_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let g = cmd_generate(&cfg, &dir.path().join("a.csv")).unwrap();
    let text = fs::read_to_string(&g.csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("txn_id,timestamp,"));
    assert_eq!(lines.len(), 301);
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(&g.stats_file).unwrap()).unwrap();
    assert_eq!(stats["rows"].as_u64().unwrap() as usize, lines.len() - 1);
    let frauds = lines[1..].iter().filter(|l| l.ends_with(",1")).count();
    assert_eq!(stats["fraud_rows"].as_u64().unwrap() as usize, frauds);
    assert!(g.schema.exists());

    let again = cmd_generate(&cfg, &dir.path().join("b.csv")).unwrap();
    assert_eq!(fs::read(&g.csv).unwrap(), fs::read(&again.csv).unwrap());
    assert_eq!(fs::read(&g.stats_file).unwrap(), fs::read(&again.stats_file).unwrap());
}

#[test]
fn zero_epochs_checkpoint_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.set("train.epochs", "0").unwrap();
    let csv = generated(dir.path(), &cfg);
    let t = cmd_train(&cfg, &csv, &dir.path().join("run")).unwrap();
    assert!(t.log.epochs.is_empty());
    let data = load_data(&cfg, &csv).unwrap();
    let names = data.graph.relation_names().to_vec();
    let init = ModelParams::init(&cfg.model, data.graph.features().cols(), names.len(), cfg.train.seed).unwrap();
    let loaded = Checkpoint::load(&t.checkpoint)
        .unwrap()
        .into_params(&cfg.model, &cfg.hash(), &names)
        .unwrap();
    assert_eq!(loaded, init);
}

#[test]
fn train_is_reproducible_and_logs_every_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let csv = generated(dir.path(), &cfg);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    cmd_train(&cfg, &csv, &a).unwrap();
    cmd_train(&cfg, &csv, &b).unwrap();
    assert_eq!(fs::read(a.join(CHECKPOINT_FILE)).unwrap(), fs::read(b.join(CHECKPOINT_FILE)).unwrap());
    let log_a = fs::read_to_string(a.join(LOG_FILE)).unwrap();
    let log_b = fs::read_to_string(b.join(LOG_FILE)).unwrap();
    assert_eq!(without_wall_time(&log_a), without_wall_time(&log_b));
    assert_eq!(log_a.lines().count(), 1 + cfg.train.epochs);
    assert_eq!(log_a.lines().next().unwrap(), "epoch,loss,wall_time");
    let resolved = fs::read_to_string(a.join("config.resolved")).unwrap();
    assert_eq!(resolved, cfg.resolved());
}

#[test]
fn evaluate_reports_and_refuses_other_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let csv = generated(dir.path(), &cfg);
    let run = dir.path().join("run");
    let t = cmd_train(&cfg, &csv, &run).unwrap();
    let out = run.join("metrics.json");
    let report = cmd_evaluate(&cfg, &t.checkpoint, &csv, &out).unwrap();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["auc", "f1", "fn", "fp", "precision", "recall", "threshold", "tn", "tp"]);
    assert_eq!(v["auc"].as_f64().unwrap(), report.auc);

    let mut other = cfg.clone();
    other.set("gnn.dim", "6").unwrap();
    let err = cmd_evaluate(&other, &t.checkpoint, &csv, &out).unwrap_err();
    assert_eq!(fraudgt_cli::exit_code(&err), EXIT_CONFIG);
    // the threshold is not part of the hash
    let mut looser = cfg.clone();
    looser.set("train.threshold", "0.2").unwrap();
    assert!(cmd_evaluate(&looser, &t.checkpoint, &csv, &out).is_ok());
}

#[test]
fn injected_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let csv = generated(dir.path(), &cfg);
    let data = load_data(&cfg, &csv).unwrap();
    let oracle: Vec<f64> = data
        .graph
        .labels()
        .iter()
        .map(|l| if *l == Label::Fraud { 1.0 } else { 0.0 })
        .collect();
    let r = report_for_scores(&cfg, &data, &oracle).unwrap();
    assert_eq!((r.recall, r.f1, r.auc), (1.0, 1.0, 1.0));
    let flat = vec![0.3; oracle.len()];
    assert_eq!(report_for_scores(&cfg, &data, &flat).unwrap().auc, 0.5);
    assert!(report_for_scores(&cfg, &data, &flat[1..]).is_err());
}

#[test]
fn ablation_table_and_flag_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let csv = generated(dir.path(), &cfg);
    let out = dir.path().join("ablate");
    let rows = cmd_ablate(&cfg, &csv, &out).unwrap();
    let table = fs::read_to_string(out.join(ABLATION_FILE)).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "variant,recall,f1,auc");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));

    let mut off = cfg.clone();
    off.set("temporal.enabled", "false").unwrap();
    let run = dir.path().join("off");
    let t = cmd_train(&off, &csv, &run).unwrap();
    let report = cmd_evaluate(&off, &t.checkpoint, &csv, &run.join("m.json")).unwrap();
    let row = rows.iter().find(|r| r.variant == "no_temporal").unwrap();
    assert_eq!(row.report, report);
    assert_eq!(
        fs::read(out.join("no_temporal").join(CHECKPOINT_FILE)).unwrap(),
        fs::read(&t.checkpoint).unwrap()
    );
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(name)
}

#[test]
fn preset_files_match_built_in_presets() {
    for (file, built_in) in [
        ("pr-style.conf", SynthConfig::pr_style()),
        ("tc-style.conf", SynthConfig::tc_style()),
    ] {
        let mut c = RunConfig::default();
        c.apply_file(&preset(file)).unwrap();
        assert_eq!(c.synth, built_in, "{file}");
    }
}

fn fraudgt(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fraudgt")).args(args).output().unwrap()
}

#[test]
fn binary_round_trip_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    let sets = [
        "--set", "synth.n_transactions=300", "--set", "gnn.dim=4", "--set", "gnn.layers=1", "--set", "attn.heads=2",
        "--set", "attn.ffn_mult=1", "--set", "train.epochs=2",
    ];
    let with = |extra: &[&str]| -> Vec<String> { extra.iter().chain(&sets).map(|s| s.to_string()).collect() };
    let run = |args: Vec<String>| fraudgt(&args.iter().map(String::as_str).collect::<Vec<_>>());

    let out = run(with(&["generate", "--out", &p("d.csv")]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gnn.dim = 4"));
    let out = run(with(&["train", &p("d.csv"), "--out", &p("run"), "--seed", "3"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ck = p("run/checkpoint.json");
    let out = run(with(&["evaluate", &ck, &p("d.csv"), "--seed", "3"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let file: serde_json::Value = serde_json::from_str(&fs::read_to_string(p("run/metrics.json")).unwrap()).unwrap();
    assert_eq!(stdout, file);

    // a different seed changes the hash
    let out = run(with(&["evaluate", &ck, &p("d.csv")]));
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    let out = fraudgt(&["train", &p("d.csv"), "--set", "gnn.dimm=4"]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    let out = fraudgt(&["train", &p("missing.csv"), "--set", "data.schema=" , "--out", &p("x")]);
    assert_eq!(out.status.code(), Some(EXIT_IO));

    fs::write(p("bad.csv"), "txn_id,timestamp\n").unwrap();
    fs::copy(p("d.schema"), p("bad.schema")).unwrap();
    let out = run(with(&["train", &p("bad.csv"), "--out", &p("y")]));
    assert_eq!(out.status.code(), Some(EXIT_DATA));

    let out = run(with(&["train", &p("d.csv"), "--out", &p("boom"), "--set", "train.lr=1e306"]));
    assert_eq!(out.status.code(), Some(EXIT_NUMERIC), "{}", String::from_utf8_lossy(&out.stderr));
    let partial = Checkpoint::load(&dir.path().join("boom").join(PARTIAL_CHECKPOINT_FILE)).unwrap();
    assert!(partial.tensors.iter().all(|t| t.values.iter().all(|v| v.is_finite())));
}
