//! Runs the reproduction pipeline on the default configuration and prints
//! one PASS/FAIL line per acceptance criterion.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use kinespike_cli::commands::Context;
use kinespike_cli::config::RunConfig;
use kinespike_cli::repro::{cmd_repro, Check};

fn report(id: u8, passed: bool, detail: &str) {
    println!(
        "criterion {id:>2}: {} {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
}

fn determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&common::tiny_config(dir.path())).unwrap();
    let mut ctx = Context::new(cfg, 1);
    ctx.quiet = true;
    let out = dir.path().join("out");
    let first_checks = cmd_repro(&ctx).unwrap();
    let first = common::snapshot(&out);
    let second_checks = cmd_repro(&ctx).unwrap();
    let second = common::snapshot(&out);
    let differing: Vec<String> = first
        .iter()
        .filter(|(p, b)| second.get(*p) != Some(b))
        .map(|(p, _)| p.display().to_string())
        .collect();
    let verdicts_same = first_checks
        .iter()
        .map(|c| c.passed)
        .eq(second_checks.iter().map(|c| c.passed));
    let passed = differing.is_empty() && first.len() == second.len() && verdicts_same;
    let detail = if passed {
        format!(
            "{} artifacts byte-identical across two repro runs",
            first.len()
        )
    } else {
        format!(
            "{} of {} artifacts differ: {:?}",
            differing.len(),
            first.len(),
            differing
        )
    };
    (passed, detail)
}

fn main() -> ExitCode {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.output_dir = dir.path().join("out").display().to_string();
    let mut ctx = Context::new(cfg, 1);
    ctx.quiet = true;

    println!("acceptance: default configuration, full pipeline");
    let checks: Vec<Check> = match cmd_repro(&ctx) {
        Ok(c) => c,
        Err(e) => {
            println!("acceptance: pipeline error: {e}");
            return ExitCode::FAILURE;
        }
    };
    for c in &checks {
        report(
            c.id,
            c.passed,
            &format!("{} ({:.0} s): {}", c.name, c.seconds, c.detail),
        );
    }
    let (det, detail) = determinism();
    report(11, det, &format!("determinism: {detail}"));

    let failed = checks.iter().filter(|c| !c.passed).count() + usize::from(!det);
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        checks.len() + 1 - failed,
        checks.len() + 1,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
