//! End-to-end runs of the `vtl` binary and its exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn vtl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtl"))
        .args(args)
        .current_dir(cwd)
        .env("VTL_LOG", "warn")
        .output()
        .expect("spawn vtl")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"
family = "seq2seq"
seed = 3
[paths]
corpus = "corpus"
[training]
batch_size = 4
total_steps = 20
checkpoint_interval = 10
max_val_examples = 8
[recurrent]
embed = 8
hidden = 12
"#;

fn setup() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let o = vtl(&["generate", "--size", "100", "--seed", "5", "--out", "corpus"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("72 / 10 / 18"));
    std::fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    tmp
}

#[test]
fn train_decode_evaluate_round_trip() {
    let tmp = setup();
    let dir = tmp.path();
    let o = vtl(&["train", "--config", "small.toml", "--run-dir", "run"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("best checkpoint"));
    assert!(dir.join("run/ledger.json").is_file());
    let o = vtl(&["decode", "--checkpoint", "run/checkpoints/step-000020.ckpt", "--out", "out/test.jsonl"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = vtl(&["evaluate", "out/test.jsonl", "--out", "reports"], dir);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("seq2seq"));
    let o = vtl(&["compare", "reports/seq2seq.json", "reports/seq2seq.json"], dir);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).matches("seq2seq").count(), 2);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = setup();
    let o = vtl(&["train", "--config", "small.toml", "--steps", "10", "--interval", "5", "--run-dir", "run"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(tmp.path().join("run/checkpoints")).unwrap().count(), 2);
}

#[test]
fn configuration_errors_exit_2() {
    let tmp = setup();
    let dir = tmp.path();
    let o = vtl(&["train", "--config", "small.toml", "--interval", "7", "--run-dir", "run"], dir);
    assert_eq!(code(&o), 2);
    let o = vtl(&["train", "--config", "small.toml", "--corpus", "nowhere", "--run-dir", "run"], dir);
    assert_eq!(code(&o), 2);
    let o = vtl(&["train", "--family", "pretrained-abs", "--corpus", "corpus", "--run-dir", "run"], dir);
    assert_eq!(code(&o), 2);
    let o = vtl(&["train", "--family", "lstm", "--run-dir", "run"], dir);
    assert_eq!(code(&o), 2);
    let o = vtl(&["train"], dir);
    assert_eq!(code(&o), 2);
}

#[test]
fn family_mismatch_on_decode_exits_2() {
    let tmp = setup();
    let dir = tmp.path();
    assert_eq!(code(&vtl(&["train", "--config", "small.toml", "--run-dir", "run"], dir)), 0);
    std::fs::write(dir.join("ptr.toml"), SMALL.replace("seq2seq", "ptrnet")).unwrap();
    let o = vtl(
        &["decode", "--config", "ptr.toml", "--checkpoint", "run/checkpoints/step-000020.ckpt", "--out", "x.jsonl"],
        dir,
    );
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("seq2seq") && err.contains("ptrnet"), "{err}");
}

#[test]
fn data_errors_exit_3() {
    let tmp = setup();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.jsonl"), "{\"web\": 1}\nnot json\n").unwrap();
    assert_eq!(code(&vtl(&["evaluate", "bad.jsonl"], dir)), 3);
    assert_eq!(code(&vtl(&["evaluate", "missing.jsonl"], dir)), 3);
}

#[test]
fn numeric_failure_exits_4() {
    let tmp = setup();
    let dir = tmp.path();
    let cfg = format!(
        "{SMALL}[schedule.encoder]\nkind = \"constant\"\nlr = 1e30\n[schedule.decoder]\nkind = \"constant\"\nlr = 1e30\n"
    );
    std::fs::write(dir.join("hot.toml"), cfg).unwrap();
    let o = vtl(&["train", "--config", "hot.toml", "--run-dir", "run"], dir);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}
