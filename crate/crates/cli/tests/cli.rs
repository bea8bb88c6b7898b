use std::process::{Command, Output};

fn saf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saf")).args(args).output().expect("spawn saf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn train_without_dataset_is_a_config_error() {
    let o = saf(&["train", "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dataset"));
}

#[test]
fn unknown_subcommand_fails() {
    assert!(!saf(&["frobnicate"]).status.success());
    assert!(!saf(&[]).status.success());
}

#[test]
fn unknown_engine_lists_valid_ones() {
    let o = saf(&["train", "--dataset", "two-moons", "--engine", "bptt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("saf-e"));
}

#[test]
fn verify_is_deterministic() {
    let args = ["verify", "--seed", "7", "--trials", "12", "--suite", "forward", "--suite", "oracle", "--sequential"];
    let a = saf(&args);
    let b = saf(&args);
    assert!(a.status.success(), "{}", stdout(&a));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("all suites passed"));
}

#[test]
fn train_writes_outputs_and_infer_replays_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let flags = ["--dataset", "two-moons", "--dataset-n", "80", "--hidden", "8", "--epochs", "2", "--batch-size", "16"];
    let mut args = vec!["train"];
    args.extend(flags);
    args.extend(["--out", out.to_str().unwrap()]);
    let o = saf(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.txt", "checkpoint.txt", "metrics.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let ckpt = out.join("checkpoint.txt");
    let mut args = vec!["infer", "--checkpoint", ckpt.to_str().unwrap()];
    args.extend(flags);
    let o = saf(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("train: saf_acc"));

    let mut args = vec!["compare-grads", "--a", "saf-e", "--b", "ottt-o", "--samples", "16"];
    args.extend(flags);
    let o = saf(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("mean gradient: corr"));
}

#[test]
fn small_bench_succeeds() {
    let o = saf(&["bench", "--hidden", "4", "--batch", "4", "--reps", "1", "--steps", "2,4", "--memory-steps", "8"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("memory: SAF streaming flat"));
}
