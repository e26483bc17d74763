use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use corrbench::metrics::PredictedMatching;
use corrbench::pipeline::load_instance;
use corrbench::toy::{write_toy_dataset, ToySpec};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_corrbench"));
    c.env("RUST_LOG", "warn").env_remove("CORRBENCH_DATA_DIR");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn setup() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_toy_dataset(&data, ToySpec::default()).unwrap();
    let cfg = dir.path().join("toy.cfg");
    fs::write(
        &cfg,
        format!(
            "data_dir = {}\nsetting = partial_partial\ncount_range = 300,400\nresolution = 96\noutput_dir = out\n",
            data.display()
        ),
    )
    .unwrap();
    (dir, cfg)
}

#[test]
fn generate_twice_gives_identical_trees() {
    let (dir, cfg) = setup();
    for run_dir in ["a", "b"] {
        let cwd = dir.path().join(run_dir);
        fs::create_dir(&cwd).unwrap();
        let o = run(bin().current_dir(&cwd).args(["generate", "--config"]).arg(&cfg).args(["--seed", "42"]));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = tree(&dir.path().join("a/out"));
    assert_eq!(a.keys().filter(|k| k.ends_with("meta.txt")).count(), 10);
    assert_eq!(a, tree(&dir.path().join("b/out")));
    let echoed = String::from_utf8(a["config.cfg"].clone()).unwrap();
    assert!(echoed.contains("global_seed = 42"));

    // Re-running from the echoed config reproduces the run.
    let c = dir.path().join("c");
    fs::create_dir(&c).unwrap();
    fs::write(c.join("echo.cfg"), &echoed).unwrap();
    let o = run(bin().current_dir(&c).args(["generate", "--config", "echo.cfg"]));
    assert!(o.status.success());
    assert_eq!(tree(&c.join("out")), a);
}

#[test]
fn unknown_key_is_a_usage_error() {
    let o = run(bin().args(["generate", "--foo", "1"]));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("foo") && err.contains("n_cam_pos") && err.contains("min_overlap"), "{err}");
    let o = run(bin().args(["frobnicate"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn original_settings_violation_names_key() {
    let o = run(bin().args([
        "validate-network",
        "--manifest-only",
        "--manifest",
        "builtin",
        "--original_settings",
        "true",
        "--cam_pos_regime",
        "high",
    ]));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cam_pos_regime"));
}

#[test]
fn evaluate_ground_truth_scores_full_marks() {
    let (dir, cfg) = setup();
    let o = run(bin().current_dir(dir.path()).args(["generate", "--config"]).arg(&cfg).args(["--max_instances", "3"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");

    let o = run(bin().args(["evaluate", "--from-gt", "--instances"]).arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["instances"], 3);
    assert!((summary["mean_auc"].as_f64().unwrap() - 100.0).abs() < 1e-6);
    assert_eq!(summary["mean_iou"].as_f64(), Some(100.0));
    assert_eq!(summary["mean_f1"].as_f64(), Some(100.0));

    // The same through prediction files.
    let preds = dir.path().join("preds");
    fs::create_dir(&preds).unwrap();
    for id in ["train-000000", "train-000001", "train-000002"] {
        let inst = load_instance(&out.join(id)).unwrap();
        let mut p = PredictedMatching::from_correspondence(&inst.gt, &inst.y);
        if id == "train-000002" {
            p.map.iter_mut().for_each(|t| *t = None);
        }
        p.save(preds.join(format!("{id}.pred"))).unwrap();
    }
    let report = dir.path().join("report");
    let o = run(bin().args(["evaluate", "--instances"]).arg(&out).arg("--predictions").arg(&preds).arg("--report").arg(&report));
    assert!(o.status.success());
    let r2: serde_json::Value = serde_json::from_str(&fs::read_to_string(report.join("train-000002.json")).unwrap()).unwrap();
    assert_eq!(r2["auc"].as_f64(), Some(0.0));
    assert_eq!(r2["iou"].as_f64(), Some(0.0));
    assert_eq!(r2["f1"].as_f64(), Some(0.0));
    let curve = fs::read_to_string(report.join("train-000000.curve.txt")).unwrap();
    assert_eq!(curve.lines().count(), 1001);

    let o = run(bin().arg("inspect").arg(out.join("train-000000")));
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("setting = partial_partial"));
}

#[test]
fn network_commands_use_env_data_dir() {
    let (dir, _) = setup();
    let data = dir.path().join("data");
    let o = run(bin().env("CORRBENCH_DATA_DIR", &data).arg("validate-network"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("connected = true"));

    let labels = dir.path().join("labels");
    let o = run(bin()
        .env("CORRBENCH_DATA_DIR", &data)
        .args(["propagate-annotations", "--out"])
        .arg(&labels)
        .args(["--shape", "B.b1.002"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(labels.join("B.b1.002.labels")).unwrap();
    assert_eq!(text.lines().count(), 642);

    let o = run(bin().env("CORRBENCH_DATA_DIR", dir.path().join("missing")).arg("validate-network"));
    assert_eq!(o.status.code(), Some(1));
}
