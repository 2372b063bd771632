use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use erd_cli::{EvaluationRecord, PipelineConfig};
use erd_core::corpus::load_corpus;

fn erd(run_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erd"))
        .arg("--run-dir")
        .arg(run_dir)
        .args(args)
        .output()
        .expect("erd runs")
}

fn ok(run_dir: &Path, args: &[&str]) -> String {
    let out = erd(run_dir, args);
    assert!(out.status.success(), "erd {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn record(path: PathBuf) -> EvaluationRecord {
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap()
}

#[test]
fn generate_prints_stats_that_match_the_files() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["generate"]);
    for name in ["synthetic_train", "synthetic_test"] {
        let corpus = load_corpus(dir.path().join("corpus").join(format!("{name}.jsonl"))).unwrap();
        let s = corpus.stats();
        let line = stdout.lines().find(|l| l.starts_with(name)).expect("stats row");
        let cols: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cols[1..4], [s.users.to_string(), s.positives.to_string(), s.negatives.to_string()]);
    }
    let row = |name: &str| -> Vec<String> {
        let line = stdout.lines().find(|l| l.starts_with(name)).unwrap();
        line.split_whitespace().skip(1).take(3).map(String::from).collect()
    };
    assert_eq!(row("synthetic_train"), ["200", "90", "110"]);
    assert_eq!(row("synthetic_test"), ["100", "45", "55"]);
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn other_seed_gives_other_corpus_of_same_shape() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["generate"]);
    ok(b.path(), &["--seed", "8", "generate"]);
    let file = |d: &Path| d.join("corpus/synthetic_train.jsonl");
    assert_ne!(fs::read(file(a.path())).unwrap(), fs::read(file(b.path())).unwrap());
    let (sa, sb) = (load_corpus(file(a.path())).unwrap().stats(), load_corpus(file(b.path())).unwrap().stats());
    assert_eq!((sa.users, sa.positives), (sb.users, sb.positives));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = \"seven\"\n").unwrap();
    assert_eq!(erd(dir.path(), &["--config", bad.to_str().unwrap(), "generate"]).status.code(), Some(2));
    assert_eq!(erd(dir.path(), &["report"]).status.code(), Some(2));
    assert_eq!(erd(dir.path(), &["train"]).status.code(), Some(2));

    ok(dir.path(), &["generate"]);
    ok(dir.path(), &["train", "--epochs", "1"]);
    // nothing listens on port 9 of the loopback interface
    let out = erd(dir.path(), &["client", "--endpoint", "http://127.0.0.1:9"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_round_trips() {
    let cfg = PipelineConfig::default();
    let text = cfg.to_toml_string();
    let back = PipelineConfig::from_toml_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_toml_string(), text);

    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate"]);
    assert_eq!(fs::read_to_string(dir.path().join("config.toml")).unwrap(), text);
}

#[test]
fn full_run_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["generate"]);
    ok(root, &["train"]);
    ok(root, &["train", "--mode", "sliding_window"]);

    let temporal = root.join("checkpoints/temporal");
    let epochs: Vec<_> = (0..10).map(|e| temporal.join(format!("epoch_{e:02}.ckpt"))).collect();
    assert!(epochs.iter().all(|p| p.exists()));
    assert!(temporal.join("best.ckpt").exists() && temporal.join("best.json").exists());
    let marker = |mode: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(root.join(format!("checkpoints/{mode}/best.json"))).unwrap()).unwrap()
    };
    assert_eq!(marker("temporal")["mode"], "temporal");
    assert_eq!(marker("sliding_window")["mode"], "sliding_window");

    // retraining with the same seed lands on the same epoch and bytes
    let first = fs::read(temporal.join("best.ckpt")).unwrap();
    let best = marker("temporal")["best_epoch"].clone();
    ok(root, &["train"]);
    assert_eq!(marker("temporal")["best_epoch"], best);
    assert_eq!(fs::read(temporal.join("best.ckpt")).unwrap(), first);

    ok(root, &["evaluate"]);
    ok(root, &["evaluate", "--mode", "sliding_window"]);

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut server = Command::new(env!("CARGO_BIN_EXE_erd"))
        .arg("--run-dir")
        .arg(root)
        .args(["serve", "--port", &port.to_string()])
        .spawn()
        .unwrap();
    let ready = (0..200).any(|_| {
        std::thread::sleep(std::time::Duration::from_millis(25));
        std::net::TcpStream::connect(("127.0.0.1", port)).is_ok()
    });
    assert!(ready, "server did not start");
    let endpoint = format!("http://127.0.0.1:{port}");
    let mut clients = vec![];
    for mode in ["temporal", "sliding_window"] {
        for scoring in ["per_round", "checkpoint"] {
            clients.push(erd(root, &["client", "--endpoint", &endpoint, "--mode", mode, "--scoring", scoring]));
        }
    }
    server.kill().unwrap();
    server.wait().unwrap();
    for c in &clients {
        assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
        let json: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
        for key in ["ERDE5", "ERDE30", "F-latency"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    let reports = root.join("reports");
    for mode in ["temporal", "sliding_window"] {
        let offline = record(reports.join(format!("{mode}.offline.json")));
        let checkpoint = record(reports.join(format!("{mode}.server_checkpoint.json")));
        assert_eq!(offline.report, checkpoint.report);
        assert_eq!(offline.seed, 7);
    }

    let listed = ok(root, &["report"]);
    for mode in ["temporal", "sliding_window"] {
        let svg = fs::read_to_string(reports.join(format!("timelines/{mode}/timeline_validation.svg"))).unwrap();
        assert!(svg.contains("data-theta=\"30\""));
    }
    let probe = fs::read_to_string(reports.join("probe.csv")).unwrap();
    assert_eq!(probe.lines().filter(|l| l.starts_with("temporal,")).count(), 10);
    assert_eq!(probe.lines().filter(|l| l.starts_with("sliding_window,")).count(), 10);
    let comparison = fs::read_to_string(reports.join("comparison.csv")).unwrap();
    let rows: Vec<&str> = comparison.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for model in ["temporal", "sliding_window"] {
        for evaluator in ["offline", "server", "server_checkpoint"] {
            let prefix = format!("{model},{evaluator},");
            assert_eq!(rows.iter().filter(|r| r.starts_with(&prefix)).count(), 1, "{prefix}");
        }
    }
    assert!(listed.contains("comparison.csv"));

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap();
    for command in ["generate", "train_temporal", "train_sliding_window", "report"] {
        assert_eq!(manifest["commands"][command]["seed"], 7, "{command}");
    }
}
