use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spoofprompt_cli::rundir::verify;

const TINY: &str = r#"
[synth]
live = 16
physical = 8
digital = 8

[train]
steps = 3
batch_size = 4
"#;

fn spoofprompt(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spoofprompt"));
    cmd.current_dir(dir).args(args).env_remove("SPLUAD_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn err_line(out: &Output) -> String {
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    stderr.trim_end().to_string()
}

fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("tiny.toml"), TINY).unwrap();
    tmp
}

#[test]
fn synth_refuses_to_overwrite_without_force() {
    let tmp = workspace();
    let d = tmp.path();
    let args = ["synth", "--config", "tiny.toml", "--out", "corpus"];
    let stdout = ok(&spoofprompt(d, &args, &[]));
    assert!(stdout.contains("32 samples"), "{stdout}");
    assert_eq!(fs::read_dir(d.join("corpus/images")).unwrap().count(), 32);
    verify(&d.join("corpus")).unwrap();

    let line = err_line(&spoofprompt(d, &args, &[]));
    assert!(line.starts_with("error[E_EXISTS]: "), "{line}");

    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&spoofprompt(d, &forced, &[]));
}

#[test]
fn train_eval_cluster_report_round_trip() {
    let tmp = workspace();
    let d = tmp.path();
    let stdout = ok(&spoofprompt(d, &["train", "--config", "tiny.toml", "--out", "run"], &[]));
    assert!(stdout.contains("unchanged: true"), "{stdout}");
    let run = d.join("run");
    let manifest = verify(&run).unwrap();
    for f in ["config.toml", "train.log", "model/model.ckpt", "scores.csv", "roc.csv", "metrics.toml", "report.txt"] {
        assert!(manifest.files.iter().any(|e| e.path == f), "{f} missing from run.toml");
    }
    let log = fs::read_to_string(run.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 4);

    ok(&spoofprompt(d, &["eval", "--config", "tiny.toml", "--model", "run", "--out", "ev"], &[]));
    // the eval split is the one train held out, so the scores agree
    assert_eq!(
        fs::read_to_string(run.join("scores.csv")).unwrap(),
        fs::read_to_string(d.join("ev/scores.csv")).unwrap()
    );

    let clusters = ok(&spoofprompt(d, &["cluster", "--model", "run", "--out", "cl"], &[]));
    assert!(clusters.starts_with("clusters: 4"), "{clusters}");

    let table = ok(&spoofprompt(
        d,
        &["report", "--scores", "run/scores.csv", "--compare", "Again=ev/scores.csv", "--out", "rep"],
        &[],
    ));
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("Method"));
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1].split_whitespace().skip(1).collect::<Vec<_>>(), lines[2].split_whitespace().skip(1).collect::<Vec<_>>());
}

#[test]
fn training_is_deterministic_per_seed() {
    let tmp = workspace();
    let d = tmp.path();
    for out in ["a", "b"] {
        ok(&spoofprompt(d, &["train", "--config", "tiny.toml", "--seed", "7", "--out", out], &[]));
    }
    for f in ["train.log", "model/model.ckpt", "scores.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_on_a_synthesized_manifest_without_modules() {
    let tmp = workspace();
    let d = tmp.path();
    ok(&spoofprompt(d, &["synth", "--config", "tiny.toml", "--out", "corpus"], &[]));
    ok(&spoofprompt(
        d,
        &["train", "--config", "tiny.toml", "--data", "corpus/manifest.csv", "--no-scpg", "--no-caa", "--out", "run"],
        &[],
    ));
    let cfg = fs::read_to_string(d.join("run/config.toml")).unwrap();
    assert!(cfg.contains("scpg_on = false") && cfg.contains("caa_on = false"), "{cfg}");
    let line = err_line(&spoofprompt(d, &["cluster", "--model", "run", "--out", "cl"], &[]));
    assert!(line.starts_with("error[E_USAGE]"), "{line}");
}

#[test]
fn ablation_is_independent_of_thread_count() {
    let tmp = workspace();
    let d = tmp.path();
    let args = |out: &'static str| ["ablate", "--config", "tiny.toml", "--seeds", "0,1", "--steps", "2", "--out", out];
    let one = ok(&spoofprompt(d, &args("t1"), &[("SPLUAD_THREADS", "1")]));
    ok(&spoofprompt(d, &args("t3"), &[("SPLUAD_THREADS", "3")]));
    assert!(one.starts_with("SCPG CAA"), "{one}");
    let csv = fs::read_to_string(d.join("t1/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert_eq!(csv, fs::read_to_string(d.join("t3/ablation.csv")).unwrap());

    let line = err_line(&spoofprompt(d, &args("t0"), &[("SPLUAD_THREADS", "zero")]));
    assert!(line.starts_with("error[E_USAGE]"), "{line}");
}

#[test]
fn configuration_errors_are_one_line() {
    let tmp = workspace();
    let d = tmp.path();
    fs::write(d.join("bad.toml"), "[train]\nlearning_rate = -1.0\n").unwrap();
    let line = err_line(&spoofprompt(d, &["train", "--config", "bad.toml", "--out", "x"], &[]));
    assert!(line.starts_with("error[E_CONFIG]"), "{line}");
    assert!(!d.join("x").exists());

    let line = err_line(&spoofprompt(d, &["train", "--config", "missing.toml"], &[]));
    assert!(line.starts_with("error[E_IO]"), "{line}");

    fs::write(d.join("bad.csv"), "id,path,label,family\na,images/a.ppm,alien,\n").unwrap();
    let line = err_line(&spoofprompt(d, &["train", "--config", "tiny.toml", "--data", "bad.csv", "--out", "y"], &[]));
    assert!(line.starts_with("error[E_LOADER]"), "{line}");
    assert!(!d.join("y").exists());
}
