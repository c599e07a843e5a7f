use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neurcam::PersistedModel;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_neurcam");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .env("NEURCAM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key}= in {stdout:?}"))
        .parse()
        .unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn blobs() -> Self {
        let dir = TempDir::new().unwrap();
        ok(
            dir.path(),
            &["synth", "--n", "400", "--d", "3", "--k", "3", "--seed", "7", "--out", "x.csv", "--labels-out", "y.txt"],
        );
        Workspace { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn fit(&self, out: &str, extra: &[&str]) -> String {
        let mut args = vec![
            "fit", "--x", "x.csv", "--k", "3", "--gates", "3", "--seeds", "0,1", "--epochs", "40", "--warmup", "15",
            "--temper", "8", "--hidden", "12", "--basis", "6", "--batch-size", "100", "--out", out,
        ];
        args.extend_from_slice(extra);
        ok(self.path(), &args)
    }
}

#[test]
fn fit_predict_eval_round_trip() {
    let ws = Workspace::blobs();
    let stdout = ws.fit("m.json", &["--pair-gates", "1", "--checkpoint-every", "5"]);
    let inertia = value(&stdout, "inertia");
    assert!(inertia.is_finite() && inertia > 0.0);

    let model = PersistedModel::load(&ws.file("m.json")).unwrap();
    assert!(model.model.backbone_pair.is_some());
    assert!(model.scaler.is_some());
    let leftovers: Vec<_> = fs::read_dir(ws.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains(".ckpt"))
        .collect();
    assert!(leftovers.is_empty(), "checkpoints left behind");

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.file("m.json.report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert_eq!(report["best_inertia"].as_f64().unwrap(), inertia);

    ok(ws.path(), &["predict", "--model", "m.json", "--x", "x.csv", "--out", "p.csv"]);
    let pred = fs::read_to_string(ws.file("p.csv")).unwrap();
    let mut lines = pred.lines();
    assert_eq!(lines.next(), Some("cluster"));
    let labels: Vec<usize> = lines.map(|l| l.parse().unwrap()).collect();
    assert_eq!(labels.len(), 400);
    assert!(labels.iter().all(|&l| l < 3));

    let eval = ok(ws.path(), &["eval", "--model", "m.json", "--x", "x.csv", "--labels", "y.txt"]);
    for key in ["ari", "nmi", "acc", "inertia"] {
        let v = value(&eval, key);
        assert!(v.is_finite(), "{key}={v}");
    }
    assert_eq!(value(&eval, "inertia"), inertia);
    assert!(value(&eval, "acc") > 0.9, "{eval}");
}

#[test]
fn soft_assignments_sum_to_one() {
    let ws = Workspace::blobs();
    ws.fit("m.json", &[]);
    let stdout = ok(ws.path(), &["predict", "--model", "m.json", "--x", "x.csv", "--soft"]);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("cluster_0,cluster_1,cluster_2"));
    let mut rows = 0;
    for line in lines {
        let w: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(w.len(), 3);
        assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        rows += 1;
    }
    assert_eq!(rows, 400);
}

#[test]
fn zero_pair_gates_builds_no_pair_backbone() {
    let ws = Workspace::blobs();
    ws.fit("m.json", &["--pair-gates", "0"]);
    let model = PersistedModel::load(&ws.file("m.json")).unwrap();
    assert!(model.model.backbone_pair.is_none());
    assert_eq!(model.model.num_pair(), 0);
}

#[test]
fn wrong_column_count_is_a_usage_error() {
    let ws = Workspace::blobs();
    ws.fit("m.json", &[]);
    fs::write(ws.file("narrow.csv"), "a,b\n1,2\n3,4\n").unwrap();
    let out = run(ws.path(), &["predict", "--model", "m.json", "--x", "narrow.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected 3 features"));

    fs::write(ws.file("short.txt"), "0\n1\n").unwrap();
    let out = run(ws.path(), &["eval", "--model", "m.json", "--x", "x.csv", "--labels", "short.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_flags_exit_with_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), &["fit", "--x", "x.csv"]).status.code(), Some(2));
    assert_eq!(
        run(dir.path(), &["fit", "--x", "x.csv", "--out", "m.json", "--ablation", "nope"]).status.code(),
        Some(2)
    );
    // missing files are i/o errors, not usage errors
    assert_eq!(
        run(dir.path(), &["predict", "--model", "absent.json", "--x", "x.csv"]).status.code(),
        Some(1)
    );
}

#[test]
fn explain_output_is_reproducible() {
    let ws = Workspace::blobs();
    ws.fit("m.json", &["--pair-gates", "1"]);
    let args = |d: &'static str| ["explain", "--model", "m.json", "--x", "x.csv", "--out-dir", d, "--grid-points", "32"];
    let first = ok(ws.path(), &args("a"));
    let second = ok(ws.path(), &args("b"));
    assert_eq!(first, second);

    let mut names: Vec<String> = fs::read_dir(ws.file("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.contains(&"manifest.json".to_string()));
    assert!(names.contains(&"importance.csv".to_string()));
    assert!(names.iter().any(|n| n.starts_with("feature_0_x0")));
    for name in &names {
        let a = fs::read(ws.file("a").join(name)).unwrap();
        let b = fs::read(ws.file("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }

    // curves are reported in the original units of the data
    let x = fs::read_to_string(ws.file("x.csv")).unwrap();
    let col0: Vec<f64> = x.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    let lo = col0.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = col0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let curve = fs::read_to_string(ws.file("a").join(names.iter().find(|n| n.starts_with("feature_0_")).unwrap())).unwrap();
    let grid: Vec<f64> = curve.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(grid.len(), 32);
    assert!((grid[0] - lo).abs() < 1e-6 * (1.0 + lo.abs()), "{} vs {lo}", grid[0]);
    assert!((grid[31] - hi).abs() < 1e-6 * (1.0 + hi.abs()), "{} vs {hi}", grid[31]);
}

#[test]
fn baseline_is_deterministic_and_logs_restarts() {
    let ws = Workspace::blobs();
    let args = ["baseline-kmeans", "--xt", "x.csv", "--k", "3", "--labels", "y.txt", "--seed", "3"];
    let a = run(ws.path(), &args);
    let b = run(ws.path(), &args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let stdout = String::from_utf8(a.stdout).unwrap();
    assert!(value(&stdout, "ari") > 0.99);
    assert!(value(&stdout, "inertia") > 0.0);
    let stderr = String::from_utf8(a.stderr).unwrap();
    assert_eq!(stderr.matches("restart ").count(), 5, "{stderr}");

    let quiet = run(ws.path(), &["-q", "baseline-kmeans", "--xt", "x.csv", "--k", "3"]);
    assert!(quiet.status.success());
    assert!(quiet.stderr.is_empty());
}

#[test]
fn flags_override_config_file() {
    let ws = Workspace::blobs();
    fs::write(
        ws.file("cfg.toml"),
        "k = 2\nnum_single = 2\nhidden = 10\ngamma = 0.5\nseeds = [4]\nablation = \"no_kl\"\n",
    )
    .unwrap();
    ok(
        ws.path(),
        &[
            "fit", "--x", "x.csv", "--config", "cfg.toml", "--k", "3", "--epochs", "20", "--warmup", "10", "--temper",
            "5", "--basis", "6", "--out", "m.json",
        ],
    );
    let model = PersistedModel::load(&ws.file("m.json")).unwrap();
    assert_eq!(model.config.k, 3);
    assert_eq!(model.config.num_single, 2);
    assert_eq!(model.config.hidden, 10);
    assert_eq!(model.config.gamma, 0.5);
    assert_eq!(model.config.seeds, vec![4]);
    assert_eq!(model.config.ablation, neurcam::Ablation::NoKl);
    assert_eq!(model.config.total_epochs, Some(20));
    assert_eq!(model.seed, 4);

    fs::write(ws.file("bad.toml"), "clusters = 3\n").unwrap();
    let out = run(ws.path(), &["fit", "--x", "x.csv", "--config", "bad.toml", "--out", "n.json"]);
    assert_eq!(out.status.code(), Some(2));
}
