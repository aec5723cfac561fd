//! End-to-end runs of the bclab binary on a miniature configuration. Each
//! stage writes real artifacts into a temp dir and the next stage consumes
//! them, so this covers the file formats and CLI wiring together.

use std::path::Path;
use std::process::{Command, Output};

fn bclab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bclab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn bclab")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = bclab(dir, args);
    assert!(
        out.status.success(),
        "bclab {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const MINI_CONFIG: &str = "\
obs_size=16
n_episodes=2
t_max=60
epochs=1
batch_size=16
n_rollouts=2
seeds_per_cell=1
sweep_fractions=0,0.5
poison_fraction=0.5
budget=5
";

#[test]
fn pipeline_stages_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("mini.cfg"), MINI_CONFIG).unwrap();

    let out = run_ok(root, &["gen-demos", "--config", "mini.cfg"]);
    assert!(out.contains("mean episode reward"), "{out}");
    assert!(root.join("out/demos.bcd").exists());

    let out = run_ok(root, &["poison", "--config", "mini.cfg"]);
    assert!(out.contains("stamped"), "{out}");
    assert!(root.join("out/poisoned.bcd").exists());

    let out = run_ok(root, &["train", "--config", "mini.cfg"]);
    assert!(out.contains("epoch  1"), "{out}");
    assert!(root.join("out/policy.bcpk").exists());

    let out = run_ok(root, &["eval", "--config", "mini.cfg", "--out", "eval.csv"]);
    assert!(out.contains("control rate"), "{out}");
    let eval_csv = std::fs::read_to_string(root.join("eval.csv")).unwrap();
    assert!(eval_csv.lines().count() == 2, "header plus one row:\n{eval_csv}");

    let out = run_ok(root, &["attack-eval", "--config", "mini.cfg", "--out", "modes.csv"]);
    for mode in ["none", "random", "entropy"] {
        assert!(out.contains(mode), "missing {mode} in {out}");
    }
    let modes_csv = std::fs::read_to_string(root.join("modes.csv")).unwrap();
    assert_eq!(modes_csv.lines().count(), 4);
}

#[test]
fn sweep_and_report_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("mini.cfg"), MINI_CONFIG).unwrap();

    run_ok(root, &["sweep", "--config", "mini.cfg", "--out", "a.csv"]);
    run_ok(root, &["sweep", "--config", "mini.cfg", "--out", "b.csv"]);
    let a = std::fs::read(root.join("a.csv")).unwrap();
    let b = std::fs::read(root.join("b.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "sweep CSV must be byte-identical across runs");
    assert_eq!(
        std::fs::read(root.join("out/a.svg")).unwrap(),
        std::fs::read(root.join("out/b.svg")).unwrap(),
        "sweep SVG must be byte-identical across runs"
    );
}

#[test]
fn report_rerenders_sweep_output() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("mini.cfg"), MINI_CONFIG).unwrap();

    run_ok(root, &["sweep", "--config", "mini.cfg"]);
    let svg_path = root.join("out/sweep.svg");
    let first = std::fs::read(&svg_path).unwrap();
    std::fs::remove_file(&svg_path).unwrap();

    run_ok(root, &["report", "--config", "mini.cfg"]);
    let second = std::fs::read(&svg_path).unwrap();
    assert_eq!(first, second, "report must reproduce the sweep chart bytes");
}

#[test]
fn overrides_change_behavior_and_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("mini.cfg"), MINI_CONFIG).unwrap();
    run_ok(root, &["gen-demos", "--config", "mini.cfg"]);

    run_ok(root, &["poison", "--config", "mini.cfg", "--fraction", "0", "--out", "p0.bcd"]);
    run_ok(
        root,
        &["poison", "--config", "mini.cfg", "--fraction", "1", "--patch-type", "gaussian", "--out", "p1.bcd"],
    );
    let p0 = std::fs::read(root.join("p0.bcd")).unwrap();
    let p1 = std::fs::read(root.join("p1.bcd")).unwrap();
    assert_ne!(p0, p1, "fraction and patch type overrides must matter");

    // bad config key
    std::fs::write(root.join("bad.cfg"), "no_such_key=1\n").unwrap();
    let out = bclab(root, &["gen-demos", "--config", "bad.cfg"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));

    // out-of-range override
    let out = bclab(root, &["poison", "--config", "mini.cfg", "--fraction", "1.5"]);
    assert!(!out.status.success());

    // missing input file
    std::fs::write(root.join("empty.cfg"), "demos_path=missing.bcd\n").unwrap();
    let out = bclab(root, &["poison", "--config", "empty.cfg"]);
    assert!(!out.status.success());
}
