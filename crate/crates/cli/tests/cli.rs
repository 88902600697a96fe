use std::path::Path;
use std::process::{Command, Output};

use daplkit_core::harness::{ExperimentConfig, METRICS_FILE, SNAPSHOT_FILE};
use daplkit_core::{data, DomainId, PromptMode};

fn daplkit(args: &[&str]) -> Output {
    daplkit_env(args, None)
}

fn daplkit_env(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_daplkit"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("DAPLKIT_THREADS");
    if let Some(t) = threads {
        cmd.env("DAPLKIT_THREADS", t);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_snapshot_metrics_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = daplkit(&[
        "train",
        "--out",
        path(&out),
        "--mode",
        "CLASS_SPECIFIC_DSC",
        "--tau",
        "0.4",
        "--m1",
        "4",
        "--m2",
        "2",
        "--seed",
        "7",
        "--temp",
        "0.2",
        "--set",
        "train.epochs=3",
        "--plots",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = ExperimentConfig::load(out.join(SNAPSHOT_FILE)).unwrap();
    assert_eq!(cfg.prompt.mode, PromptMode::ClassSpecificDsc);
    assert_eq!((cfg.prompt.m1, cfg.prompt.m2), (4, 2));
    assert_eq!(cfg.pseudo.tau, 0.4);
    assert_eq!(cfg.head.temperature, 0.2);
    assert_eq!(cfg.train.seed, 7);
    assert_eq!(cfg.run.seeds, vec![7]);
    assert!(cfg.run.plots);

    let metrics = std::fs::read_to_string(out.join(METRICS_FILE)).unwrap();
    let records: Vec<serde_json::Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 3);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["epoch"], i);
        assert_eq!(r["variant"], "CLASS_SPECIFIC_DSC");
        assert_eq!(r["seed"], 7);
        assert!(r["ls"].as_f64().unwrap() > 0.0);
        assert!(r["acc"].as_f64().is_some());
    }
    let (bank, pc) = data::load_checkpoint(out.join("checkpoint.txt")).unwrap();
    assert_eq!(pc.mode, PromptMode::ClassSpecificDsc);
    assert_eq!(bank.context().len(), 4);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["target"]["macro_avg"].as_f64().unwrap() > 0.25);
    assert!(std::fs::read_to_string(out.join("loss.svg"))
        .unwrap()
        .starts_with("<svg"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("target"));
}

#[test]
fn gen_data_files_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let o = daplkit(&[
        "gen-data",
        "--out",
        path(dir.path()),
        "--seed",
        "2",
        "--set",
        "task.source_samples=40",
        "--set",
        "task.target_samples=24",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = data::load_dataset(dir.path().join("source.txt")).unwrap();
    let t = data::load_dataset(dir.path().join("target.txt")).unwrap();
    assert_eq!((s.len(), t.len()), (40, 24));
    assert_eq!(t.domain(), DomainId::Target);

    // training from the generated files matches training on the synthetic draw
    let from_files = dir.path().join("files");
    let synthetic = dir.path().join("synthetic");
    let common = [
        "--seed",
        "2",
        "--set",
        "train.epochs=2",
        "--set",
        "task.source_samples=40",
        "--set",
        "task.target_samples=24",
    ];
    let src = format!("data.source=\"{}\"", path(&dir.path().join("source.txt")));
    let tgt = format!("data.target=\"{}\"", path(&dir.path().join("target.txt")));
    let mut a = vec!["train", "--out", path(&from_files), "--set", &src, "--set", &tgt];
    a.extend(common);
    let mut b = vec!["train", "--out", path(&synthetic)];
    b.extend(common);
    assert!(daplkit(&a).status.success());
    assert!(daplkit(&b).status.success());
    assert_eq!(
        std::fs::read(from_files.join(METRICS_FILE)).unwrap(),
        std::fs::read(synthetic.join(METRICS_FILE)).unwrap()
    );
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let missing = dir.path().join("nope.txt");
    let cases: Vec<Vec<&str>> = vec![
        vec!["diagnose", "--out", path(&out), "--checkpoint", path(&missing)],
        vec!["eval", "--out", path(&out)],
        vec!["train", "--out", path(&out), "--mode", "FANCY"],
        vec!["train", "--out", path(&out), "--tau", "1.5"],
        vec!["train", "--out", path(&out), "--set", "train.nope=1"],
        vec!["train", "--out", path(&out), "--set", "epochs"],
        vec!["train", "--out", path(&out), "--config", path(&missing)],
        vec!["fly", "--out", path(&out)],
    ];
    for args in cases {
        let o = daplkit(&args);
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(!stderr(&o).trim().is_empty(), "{args:?} printed nothing");
    }
    let o = daplkit(&["diagnose", "--out", path(&out), "--checkpoint", path(&missing)]);
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
}

#[test]
fn thread_cap_is_validated_and_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let bad = daplkit_env(&["gen-data", "--out", path(&dir.path().join("bad"))], Some("zero"));
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("DAPLKIT_THREADS"));

    let args = |o: &Path| {
        vec![
            "sweep".to_string(),
            "--out".into(),
            o.to_str().unwrap().into(),
            "--set".into(),
            "train.epochs=2".into(),
            "--set".into(),
            "run.seeds=[0, 1, 2]".into(),
            "--set".into(),
            "sweep.taus=[0.0, 0.9]".into(),
        ]
    };
    let one = dir.path().join("one");
    let many = dir.path().join("many");
    let a: Vec<String> = args(&one);
    let b: Vec<String> = args(&many);
    let a: Vec<&str> = a.iter().map(String::as_str).collect();
    let b: Vec<&str> = b.iter().map(String::as_str).collect();
    assert!(daplkit_env(&a, Some("1")).status.success());
    assert!(daplkit_env(&b, Some("6")).status.success());
    for f in [METRICS_FILE, "sweep.json", "sweep.txt"] {
        assert_eq!(
            std::fs::read(one.join(f)).unwrap(),
            std::fs::read(many.join(f)).unwrap(),
            "{f}"
        );
    }
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(one.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
}
