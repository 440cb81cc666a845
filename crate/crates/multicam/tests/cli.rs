//! End-to-end checks of the `multicam` binary: the gen → train → eval →
//! edit pipeline, determinism, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multicam"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A small config so the whole pipeline runs in seconds.
fn write_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        r#"
seed = 5
[model]
d_in = 6
d_model = 16
n_heads = 2
n_layers_t = 1
n_layers_c = 1
w = 8
d_ff = 32
d_fuse = 16
[train]
epochs = 2
batch_size = 16
[generator]
tracks = 3
dim = 6
duration_frames = 240
"#,
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn pipeline_gen_train_eval_edit() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("scenes");
    let data_s = data.display().to_string();

    // gen: writes one pool + annotation pair per scene and prints stats.
    let out = run(&["gen", "--config", &config, "--out", &data_s, "--scenes", "4"]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("4 scene(s)"), "{stdout}");
    assert!(stdout.contains("median"), "{stdout}");
    for i in 0..4 {
        assert!(data.join(format!("scene_{i:03}.pool")).exists());
        assert!(data.join(format!("scene_{i:03}.ann")).exists());
    }

    // train: 4 scenes split 3/1, checkpoint + loss curve + manifest.
    let ckpt = dir.path().join("model.ckpt");
    let ckpt_s = ckpt.display().to_string();
    let out = run(&["train", "--config", &config, "--data", &data_s, "--out", &ckpt_s]);
    assert_success(&out);
    assert!(ckpt.exists());
    assert!(dir.path().join("model.loss.txt").exists());
    let manifest = dir.path().join("model.ckpt.split.json");
    assert!(manifest.exists());
    let curve = std::fs::read_to_string(dir.path().join("model.loss.txt")).unwrap();
    assert!(curve.starts_with("step\tepoch\tmean_loss"));

    // eval: prints a table with both Random and Model rows.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    let test_pool = manifest["test"][0][0].as_str().unwrap().to_string();
    let report = dir.path().join("report.json");
    let out = run(&[
        "eval",
        "--config",
        &config,
        "--checkpoint",
        &ckpt_s,
        "--test-files",
        &test_pool,
        "--out",
        &report.display().to_string(),
    ]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Random"), "{stdout}");
    assert!(stdout.contains("Model"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for field in [
        "precision_at_half",
        "average_precision",
        "track_accuracy",
        "instance_count",
        "group_count",
        "positives_count",
    ] {
        assert!(report.get(field).is_some(), "report missing {field}");
    }

    // edit: EDL covers the pool; agreement line prints when the
    // annotation sits next to the pool.
    let edl_path = dir.path().join("cut.edl.json");
    let out = run(&[
        "edit",
        "--checkpoint",
        &ckpt_s,
        "--pool",
        &test_pool,
        "--out",
        &edl_path.display().to_string(),
    ]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("agreement"), "{stdout}");
    let edl: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&edl_path).unwrap()).unwrap();
    let shots = edl["shots"].as_array().unwrap();
    assert_eq!(shots[0]["start"], 0);
    assert_eq!(shots.last().unwrap()["end"], 240);
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = run(&[
            "gen",
            "--config",
            &config,
            "--seed",
            "7",
            "--out",
            &out_dir.display().to_string(),
            "--scenes",
            "2",
        ]);
        assert_success(&out);
    }
    for name in ["scene_000.pool", "scene_000.ann", "scene_001.pool", "scene_001.ann"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn train_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("scenes");
    let data_s = data.display().to_string();
    assert_success(&run(&["gen", "--config", &config, "--out", &data_s, "--scenes", "2"]));

    let pool = data.join("scene_000.pool").display().to_string();
    let ckpt_a = dir.path().join("a.ckpt");
    let ckpt_b = dir.path().join("b.ckpt");
    for ckpt in [&ckpt_a, &ckpt_b] {
        // Single training scene: the smoke case (train on it, empty test).
        let out = run(&[
            "train",
            "--config",
            &config,
            "--train-files",
            &pool,
            "--out",
            &ckpt.display().to_string(),
            "--epochs",
            "1",
        ]);
        assert_success(&out);
    }
    assert_eq!(
        std::fs::read(&ckpt_a).unwrap(),
        std::fs::read(&ckpt_b).unwrap(),
        "checkpoints differ between identical runs"
    );
}

#[test]
fn gradcheck_command_passes_on_tiny_config() {
    let out = run(&["gradcheck"]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS"), "{stdout}");
    assert!(stdout.contains("fuse_w1"), "per-tensor rows expected: {stdout}");
}

#[test]
fn exit_codes_follow_the_contract() {
    // Usage error → 1.
    let out = run(&["definitely-not-a-command"]);
    assert_eq!(out.status.code(), Some(1));

    // Invalid config → 1, with all problems reported together.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nd_model = 0\n[train]\nepochs = 0\n").unwrap();
    let out = run(&[
        "gen",
        "--config",
        &bad.display().to_string(),
        "--out",
        &dir.path().join("x").display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("d_model"), "{stderr}");
    assert!(stderr.contains("epochs"), "{stderr}");

    // Runtime failure (missing file) → 2.
    let out = run(&[
        "eval",
        "--checkpoint",
        "/nonexistent/model.ckpt",
        "--test-files",
        "/nonexistent/scene.pool",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
