mod common;

use common::{kinespike, ok, snapshot, tiny_config};
use serde_json::Value;

#[test]
fn gen_defaults_writes_full_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&["--quiet", "gen", "--output.dir", out.to_str().unwrap()]);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let entries = manifest
        .as_array()
        .or_else(|| manifest["logs"].as_array())
        .unwrap();
    assert_eq!(entries.len(), 128);
    let csvs = std::fs::read_dir(out.join("logs"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "csv")
        })
        .count();
    assert_eq!(csvs, 128);
}

#[test]
fn missing_upstream_is_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for cmd in ["encode", "train", "ablate"] {
        let out = kinespike(&["--config", cfg, cmd]);
        assert_eq!(out.status.code(), Some(3), "{cmd}");
        assert!(
            String::from_utf8_lossy(&out.stderr).contains("kinespike gen"),
            "{cmd}"
        );
    }
    let out = kinespike(&["--config", cfg, "embed"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kinespike train"));
    ok(&["--quiet", "--config", cfg, "gen"]);
    let out = kinespike(&["--config", cfg, "train"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kinespike encode"));
    let out = kinespike(&["--config", cfg, "convert"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kinespike train"));
}

#[test]
fn config_errors_exit_2() {
    for args in [
        &["--train.max_epochs", "zero", "config"][..],
        &["--nosuch.key", "1", "config"],
        &["--config", "/nonexistent/run.cfg", "config"],
        &["--train.batch_size", "0", "config"],
        &["frobnicate"],
    ] {
        assert_eq!(kinespike(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn printed_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let printed = ok(&["--train.seed", "7", "--encoding.mode=raw", "config"]);
    let path = dir.path().join("printed.cfg");
    std::fs::write(&path, &printed).unwrap();
    assert_eq!(ok(&["--config", path.to_str().unwrap(), "config"]), printed);
}

#[test]
fn eval_matches_best_epoch_and_snn_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for cmd in ["gen", "encode", "train"] {
        ok(&[
            "--quiet",
            "--config",
            cfg,
            "--model.kind",
            "fcn",
            "--train.max_epochs",
            "3",
            cmd,
        ]);
    }
    let out = dir.path().join("out");
    let history =
        std::fs::read_to_string(out.join("models/fcn-task-event-s42.history.csv")).unwrap();
    let best = history
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let report: Value = serde_json::from_str(&ok(&[
        "--quiet",
        "--config",
        cfg,
        "--model.kind",
        "fcn",
        "eval",
    ]))
    .unwrap();
    assert_eq!(report["accuracy"].as_f64().unwrap(), best);
    for f in [
        "fcn-task-event-s42.report.json",
        "fcn-task-event-s42.confusion.csv",
        "fcn-task-event-s42.confusion.svg",
    ] {
        assert!(out.join("reports").join(f).exists(), "{f}");
    }

    let snn = ok(&["--quiet", "--config", cfg, "--model.kind", "fcn", "convert"]);
    let snn = snn.trim();
    let report: Value = serde_json::from_str(&ok(&[
        "--quiet", "--config", cfg, "eval", "--snn", snn, "--trace",
    ]))
    .unwrap();
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(report["spiking"].is_object());
    let traces = std::fs::read_dir(out.join("reports"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .contains("trace")
        })
        .count();
    assert_eq!(traces, 1);
}

#[test]
fn commands_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let run = || {
        for cmd in [
            "gen", "encode", "train", "convert", "eval", "embed", "ablate",
        ] {
            ok(&["--quiet", "--config", cfg, "--model.kind", "cnn", cmd]);
        }
        snapshot(&dir.path().join("out"))
    };
    let first = run();
    assert!(first.len() > 48 + 48 + 10);
    let second = run();
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>()
    );
    for (path, bytes) in &first {
        assert!(
            bytes == &second[path],
            "{} differs between runs",
            path.display()
        );
    }
}

#[test]
fn output_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("elsewhere");
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_kinespike"))
        .args([
            "--quiet",
            "--dataset.reps_per_cell",
            "3",
            "--dataset.max_duration_s",
            "30",
            "gen",
        ])
        .env("KINESPIKE_OUTPUT_DIR", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(target.join("manifest.json").exists());
    let entries: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(entries, vec![std::ffi::OsString::from("elsewhere")]);
}

#[test]
fn progress_goes_to_stderr_results_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = kinespike(&["--config", cfg.to_str().unwrap(), "gen"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr
        .lines()
        .any(|l| l.starts_with("progress stage=gen logs=48")));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["logs"], 48);
    let quiet = kinespike(&["--quiet", "--config", cfg.to_str().unwrap(), "gen"]);
    assert!(quiet.stderr.is_empty());
}
