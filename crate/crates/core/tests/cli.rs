use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "corpus.train_utterances=4",
    "corpus.valid_utterances=2",
    "corpus.test_utterances=2",
    "corpus.utterance_length_s=0.4",
    "network.hidden=[12, 12]",
    "network.domain_head=[6]",
    "grid.lambdas=[1.0]",
    "grid.feature_layers=[1, 2]",
    "sweep.fractions=[1.0]",
    "stage1.epochs=1",
    "adapt.epochs=2",
    "adapt.feature_layer=1",
    "seeds=[0, 1]",
];

fn grl(step: &str, dir: &Path, extra: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_grl-asr"));
    cmd.arg(step).arg("--run-dir").arg(dir);
    for a in extra {
        cmd.arg(a);
    }
    cmd.output().expect("binary runs")
}

fn with_overrides() -> Vec<&'static str> {
    TINY.iter().flat_map(|kv| ["--set", kv]).collect()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn error_kind(out: &Output) -> String {
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn pipeline_from_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&grl("gen-data", dir, &with_overrides()));
    assert!(dir.join("config.toml").exists());
    // Later steps read the snapshot.
    ok(&grl("train", dir, &[]));
    let adapt = ok(&grl("adapt", dir, &[]));
    assert!(adapt.contains("adaptation"));
    for seed in [0, 1] {
        assert!(dir.join(format!("adapt/seed-{seed}/checkpoint.json")).exists());
        assert!(dir.join(format!("adapt/seed-{seed}/metrics.csv")).exists());
    }
    let eval: serde_json::Value = serde_json::from_str(&ok(&grl("eval", dir, &[]))).unwrap();
    assert_eq!(eval["adapted"].as_array().unwrap().len(), 2);

    let first = ok(&grl("report", dir, &[]));
    let second = ok(&grl("report", dir, &[]));
    assert_eq!(first, second);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    for step in ["gen-data", "train", "adapt", "eval"] {
        assert!(manifest["steps"][step].is_array(), "{step} missing from manifest");
    }

    // Existing outputs are kept unless forced.
    assert_eq!(error_kind(&grl("train", dir, &[])), "exists");
    ok(&grl("train", dir, &["--force"]));

    // A stored CSV that drifts from its JSON is caught.
    std::fs::write(dir.join("adapt/table.csv"), "tampered\n").unwrap();
    assert_eq!(error_kind(&grl("report", dir, &[])), "mismatch");
}

#[test]
fn changed_config_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&grl("gen-data", dir, &with_overrides()));
    let out = grl("gen-data", dir, &["--set", "corpus.train_utterances=5"]);
    assert_eq!(error_kind(&out), "exists");
}

#[test]
fn bad_overrides_and_missing_inputs_are_reported_as_json() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(error_kind(&grl("gen-data", dir, &["--set", "corpus.no_such_field=1"])), "config");
    assert_eq!(error_kind(&grl("gen-data", dir, &["--set", "adapt.lambda=oops"])), "config");
    let empty = tmp.path().join("empty");
    assert_eq!(error_kind(&grl("train", &empty, &[])), "missing");
}
