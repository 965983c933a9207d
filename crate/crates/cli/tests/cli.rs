//! Black-box checks of the binary: staging, flags and exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chartloc"))
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "scene_builtin": "manhattan-reduced",
        "sampling": { "num_labeled": 6, "num_unlabeled": 24, "spacing_m": 6.0 },
        "features": { "grid_size": 91, "k_graph": 6 },
        "stsne": { "perplexity": 8.0, "iters": 100, "learning_rate": 200.0, "momentum": 0.6, "seed": 0 },
        "sle": { "k_graph": 6, "kernel_width": null },
        "seed": 33
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn staged_invocations_produce_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("out");
    for args in [
        vec!["simulate"],
        vec!["featurize"],
        vec!["embed"],
        vec!["baseline", "knn"],
        vec!["baseline", "sle"],
        vec!["evaluate"],
        vec!["sweep", "perplexity", "6,10"],
        vec!["compare"],
    ] {
        let st = bin()
            .args(&args)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            // compare re-runs the methods under the same hash; allow it
            .arg("--force")
            .status()
            .unwrap();
        assert!(st.success(), "{args:?} failed");
    }
    for f in [
        "dataset/positions.csv",
        "dataset/meta.json",
        "dissimilarity.csv",
        "features_meta.json",
        "embedding.csv",
        "kl_trace.csv",
        "baseline_knn.csv",
        "baseline_sle.csv",
        "report.csv",
        "cdf_stsne.csv",
        "sweep_perplexity.csv",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "missing artifact {f}");
    }
}

#[test]
fn missing_prerequisite_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("out");
    let output = bin()
        .args(["embed", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&output.stderr);
    assert!(msg.contains("simulate") || msg.contains("featurize"), "{msg}");
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    let st = bin()
        .args(["simulate", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn stale_artifacts_refused_then_forced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("out");
    assert!(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap().success());
    // same pipeline, different seed => different config hash
    let output = bin()
        .args(["featurize", "--config"])
        .arg(&cfg)
        .args(["--seed", "99", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("--force"));
    let st = bin()
        .args(["featurize", "--config"])
        .arg(&cfg)
        .args(["--seed", "99", "--out"])
        .arg(&out)
        .arg("--force")
        .status()
        .unwrap();
    assert!(st.success());
}

#[test]
fn seed_flag_changes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        assert!(bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--seed", seed, "--out"])
            .arg(out)
            .status()
            .unwrap()
            .success());
    }
    let pa = std::fs::read(a.join("dataset/positions.csv")).unwrap();
    let pb = std::fs::read(b.join("dataset/positions.csv")).unwrap();
    assert_ne!(pa, pb);
}
