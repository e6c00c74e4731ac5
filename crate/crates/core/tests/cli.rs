use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smpo")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SHORT: &str = r#"
method = "smpo"
seeds = [0, 1]

[env]
name = "hazard_grid"

[smpo]
epochs = 2
steps_per_epoch = 200
gradient_steps = 2
"#;

#[test]
fn train_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("out");
    let run = smpo(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed-override",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let listed = String::from_utf8(run.stdout).unwrap();
    assert!(listed.contains("smpo_seed5.csv"));
    assert!(!out.join("smpo_seed0.csv").exists());
    assert!(out.join("smpo_seed5.critic.ckpt").is_file());

    let metrics = out.join("smpo_seed5.csv");
    let cmp = smpo(&["compare", "--window", "2", metrics.to_str().unwrap()]);
    assert!(cmp.status.success());
    let table = String::from_utf8(cmp.stdout).unwrap();
    assert!(table.starts_with("label"));
    assert!(table.contains("smpo_seed5"));

    let too_wide = smpo(&["compare", "--window", "3", metrics.to_str().unwrap()]);
    assert_eq!(too_wide.status.code(), Some(2));
}

#[test]
fn weights_suite_passes() {
    let out = smpo(&["check", "--suite", "weights"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 3);
    assert!(text.lines().all(|l| l.starts_with("[PASS]")), "{text}");
}

#[test]
fn bad_inputs_exit_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = smpo(&["train", "--config", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));

    let cfg = write_config(dir.path(), &SHORT.replace("epochs = 2", "epochs = 2\nbogus = 1"));
    let unknown = smpo(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("bogus"));

    let suite = smpo(&["check", "--suite", "everything"]);
    assert!(!suite.status.success());
}

#[test]
fn shipped_configs_parse() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            smpo::harness::parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
