#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY: &str = "\
[dataset]
reps_per_cell = 3
min_duration_s = 20
max_duration_s = 30

[encoding]
holdout_exercises_per_cell = 1

[train]
max_epochs = 2
batches_per_epoch = 4

[snn]
steps = 50

[analysis]
perplexity = 10
tsne_iterations = 200
tsne_max_points = 200
ablation_seeds = 42

[repro]
seeds = 42,43
fidelity_windows = 10
gradcheck_samples = 10
";

/// Writes the tiny config into `dir` with its output directory at `dir/out`.
pub fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.cfg");
    let body = format!("{TINY}\n[output]\ndir = {}\n", dir.join("out").display());
    std::fs::write(&path, body).unwrap();
    path
}

pub fn kinespike(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinespike"))
        .args(args)
        .env_remove("KINESPIKE_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = kinespike(args);
    assert!(
        out.status.success(),
        "kinespike {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
