//! Drives the `tscore` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tscore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tscore"))
        .args(args)
        .env_remove("TSCORE_SEED")
        .output()
        .expect("spawn tscore")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synthetic(dir: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let o = tscore(&["fetch-data", "--synthetic", "--normals", "150", "--anomalies", "30", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn help_lists_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("train", &["--data", "--config", "--out", "--steps", "--normals-only", "--no-normalize", "--seed"]),
        ("score", &["--model", "--data", "--kinds", "--out", "--sigma", "--refine-steps", "--refine-restarts"]),
        ("experiment", &["--data", "--grid", "--splits", "--out", "--kinds", "--steps", "--no-models", "--jobs"]),
        ("toy-figure", &["--out", "--samples", "--steps", "--resolution", "--model-out", "--probes"]),
        ("latent-sweep", &["--data", "--k", "--splits", "--out", "--config", "--kinds", "--steps"]),
        ("fetch-data", &["--out", "--raw", "--synthetic", "--normals", "--anomalies"]),
    ];
    for (cmd, flags) in expected {
        let o = tscore(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = String::from_utf8_lossy(&o.stdout);
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
    let o = tscore(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for (cmd, _) in expected {
        assert!(text.contains(cmd));
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tscore(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(tscore(&[]).status.code(), Some(1));
    let missing = dir.path().join("nope.csv");
    let out = dir.path().join("m.model");
    let o = tscore(&["train", "--data", p(&missing), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
    assert!(!out.exists());
    assert_eq!(tscore(&["fetch-data", "--out", p(&out)]).status.code(), Some(1));
}

#[test]
fn dimension_mismatch_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let train_csv = dir.path().join("two.csv");
    let mut text = String::from("a,b\n");
    for i in 0..120 {
        let t = i as f64 / 120.0;
        text.push_str(&format!("{t},{}\n", t * t));
    }
    std::fs::write(&train_csv, text).unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "latent_dim = 1\nprior_kind = \"standard-normal\"\nhidden_width = 8\n").unwrap();
    let model = dir.path().join("m.model");
    let o = tscore(&["train", "--data", p(&train_csv), "--config", p(&cfg), "--steps", "5", "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let three = dir.path().join("three.csv");
    std::fs::write(&three, "a,b,c\n1,2,3\n").unwrap();
    let out = dir.path().join("s.csv");
    let o = tscore(&["score", "--model", p(&model), "--data", p(&three), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension mismatch"));
    assert!(!out.exists());

    let o = tscore(&["score", "--model", p(&model), "--data", p(&train_csv), "--out", p(&out), "--kinds", "re,proposed_enc"]);
    assert_eq!(o.status.code(), Some(0));
    let scored = std::fs::read_to_string(&out).unwrap();
    assert!(scored.starts_with("a,b,score_re,score_proposed_enc\n"));
    assert_eq!(scored.lines().count(), 121);
}

#[test]
fn toy_figure_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let grid = dir.path().join(format!("grid{tag}.csv"));
        let probes = dir.path().join(format!("probes{tag}.csv"));
        let model = dir.path().join(format!("toy{tag}.model"));
        let o = tscore(&[
            "toy-figure", "--samples", "300", "--steps", "30", "--resolution", "12", "--out", p(&grid), "--probes",
            p(&probes), "--model-out", p(&model), "--seed", "7",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (
            std::fs::read(grid).unwrap(),
            std::fs::read(probes).unwrap(),
            std::fs::read(model).unwrap(),
        )
    };
    let a = run("a");
    let b = run("b");
    assert!(a.0 == b.0, "grid differs");
    assert!(a.1 == b.1, "probes differ");
    assert!(a.2 == b.2, "model differs");
    let grid = String::from_utf8(a.0).unwrap();
    assert!(grid.starts_with("x1,x2,score_re,score_pz,score_proposed,score_proposed_enc\n"));
    assert_eq!(grid.lines().count(), 1 + 144);
    assert_eq!(String::from_utf8(a.1).unwrap().lines().count(), 1 + 250);
}

#[test]
fn seed_flag_and_environment_agree() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    tscore(&["fetch-data", "--synthetic", "--normals", "20", "--anomalies", "4", "--out", p(&a), "--seed", "9"]);
    let o = Command::new(env!("CARGO_BIN_EXE_tscore"))
        .args(["fetch-data", "--synthetic", "--normals", "20", "--anomalies", "4", "--out", p(&b)])
        .env("TSCORE_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn experiment_and_sweep_commands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path(), "syn.csv");
    let grid = dir.path().join("grid.toml");
    std::fs::write(
        &grid,
        "hidden_widths = [8]\nlatent_dims = [2]\nmixture_components = [1]\nkernel_widths = [1.0]\nbetas = [1.0]\nsteps = 5\n",
    )
    .unwrap();
    let out = dir.path().join("res.jsonl");
    let o = tscore(&[
        "experiment", "--data", p(&data), "--grid", p(&grid), "--splits", "2", "--kinds", "re,proposed", "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 4);
    assert!(dir.path().join("res.summary.csv").is_file());
    assert!(dir.path().join("res.selected.csv").is_file());
    assert!(dir.path().join("res.models").join("s1_c0.model").is_file());

    let cfg = dir.path().join("base.toml");
    std::fs::write(&cfg, "hidden_width = 8\nprior_kind = \"gaussian-mixture\"\nsteps = 5\n").unwrap();
    let sweep = dir.path().join("sweep.csv");
    let o = tscore(&[
        "latent-sweep", "--data", p(&data), "--k", "1..3", "--splits", "2", "--config", p(&cfg), "--out", p(&sweep),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&sweep).unwrap();
    assert!(text.starts_with("k,split,score_kind,train_auc,test_auc,error\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 2);
}
