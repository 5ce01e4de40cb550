use std::path::Path;
use std::process::{Command, Output};

use rbno::experiment::ExperimentConfig;
use rbno::ProblemKind;

fn rbno(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbno"))
        .args(args)
        .env("RBNO_OUTPUT", root.join("out"))
        .output()
        .expect("binary runs")
}

fn tiny_config(root: &Path) -> String {
    let mut c = ExperimentConfig::desk(ProblemKind::SteadyBurgers);
    c.n_el = 16;
    c.train_sizes = vec![30];
    c.test_size = 20;
    c.reference_size = 60;
    c.ranks = vec![3];
    c.seeds = vec![1];
    c.reconstruction_rank = 4;
    c.excess_sizes = vec![10, 20];
    c.excess_seeds = vec![11, 12];
    c.excess_rank = 3;
    c.schedule.epochs = 3;
    c.schedule.batch_size = 10;
    c.schedule.lr_halvings = vec![2];
    c.theory.maps = 2;
    let path = root.join("config.json");
    c.save(&path).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_writes_a_manifest_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let first = rbno(dir.path(), &["--config", &cfg, "generate", "--n", "30", "--seed", "1"]);
    assert!(first.status.success());
    let data = dir.path().join("out/burgers/data/train-n30-s1");
    for f in ["manifest.json", "X.bin", "Y.bin", "J.bin"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let again = rbno(dir.path(), &["--config", &cfg, "generate", "--n", "30", "--seed", "1"]);
    assert_eq!(again.status.code(), Some(0));
    assert!(stdout(&again).contains("exists"));

    let mut bytes = std::fs::read(data.join("X.bin")).unwrap();
    bytes[3] ^= 0xff;
    std::fs::write(data.join("X.bin"), bytes).unwrap();
    let corrupt = rbno(dir.path(), &["--config", &cfg, "generate", "--n", "30", "--seed", "1"]);
    assert_eq!(corrupt.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&corrupt.stderr).contains("checksum"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    assert_eq!(rbno(dir.path(), &["--config", &cfg, "basis", "--rank", "18"]).status.code(), Some(1));
    assert_eq!(rbno(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(rbno(dir.path(), &["evaluate", "--suite", "nope"]).status.code(), Some(1));
    assert_eq!(rbno(dir.path(), &["--config", &cfg, "train", "--rank", "7"]).status.code(), Some(1));
}

#[test]
fn evaluate_without_artifacts_names_what_is_missing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = rbno(dir.path(), &["--config", &cfg, "evaluate", "--suite", "reconstruction"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifact"));
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    for args in [
        vec!["generate", "--reference"],
        vec!["basis"],
        vec!["basis", "--reference"],
        vec!["train", "--pair", "input_dis,output_pca"],
        vec!["train"],
        vec!["evaluate"],
    ] {
        let mut full = vec!["--config", cfg.as_str()];
        full.extend(args.iter().copied());
        let out = rbno(dir.path(), &full);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let run = dir.path().join("out/burgers/nets/burgers-input_dis-output_pca-r3-n30-s1");
    assert!(run.join("params.bin").exists() && run.join("history.csv").exists());
    for suite in ["reconstruction", "excess", "generalization", "theory"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("out/burgers/metrics/{suite}.csv"))).unwrap();
        assert!(csv.starts_with("metric,problem,basis_in,basis_out,rank,n_train,seed,value,denominator\n"));
        assert!(csv.lines().count() > 1, "{suite}");
    }
}

#[test]
fn the_flag_overrides_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let flagged = dir.path().join("flagged");
    let out = rbno(
        dir.path(),
        &["--config", &cfg, "--output", flagged.to_str().unwrap(), "generate", "--n", "20", "--seed", "1"],
    );
    assert!(out.status.success());
    assert!(flagged.join("burgers/data/train-n20-s1/manifest.json").exists());
    assert!(!dir.path().join("out").exists());
}
