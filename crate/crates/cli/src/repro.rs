//! End-to-end reproduction: runs every pipeline stage on the configured
//! corpus and checks the acceptance properties.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use kinespike::analysis::{ablate, AblationSetup};
use kinespike::datagen::read_log_csv;
use kinespike::encoding::{
    encode_events, EventWindow, InputMode, MovementSequence, ThresholdVector,
};
use kinespike::nets::{model_grad_check, Coverage, Mode, ModelFile, ModelKind, Network};
use kinespike::numcore::Rng;
use kinespike::schema::camera_features;
use kinespike::spiking::{convert, neuron_step, NeuronModel, NeuronState};
use kinespike::{Target, FEATURE_NAMES};

use crate::artifacts::{model_stem, to_json, write};
use crate::commands::{
    cmd_ablate, cmd_convert, cmd_embed, cmd_encode, cmd_gen, eval_detailed, load_manifest,
    load_movements, load_split, train_model, Context, EvalSubject, TrainSummary,
};
use crate::error::CliResult;

const GRAD_EPS: f64 = 1e-5;
const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_BUDGET_S: f64 = 120.0;
const SIGNAL_THRESHOLD: f64 = 0.70;
const SIGNAL_BUDGET_S: f64 = 600.0;
const PARITY_POINTS: f64 = 0.02;
const AGREEMENT: f64 = 0.98;
const FIDELITY_TOLERANCE: f64 = 1e-6;
const ABLATION_POINTS: f64 = 0.01;
const ENTROPY_TOLERANCE: f64 = 1e-4;

/// Outcome of one acceptance property.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Wall-clock seconds; not written to the artifact.
    #[serde(skip)]
    pub seconds: f64,
    /// Deterministic measurements backing the verdict.
    pub metrics: Value,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {:<28} {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn check(
    id: u8,
    name: &str,
    passed: bool,
    detail: String,
    started: Instant,
    metrics: Value,
) -> Check {
    Check {
        id,
        name: name.into(),
        passed,
        detail,
        seconds: started.elapsed().as_secs_f64(),
        metrics,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// First training window of each class, cycling until `n` are chosen.
fn class_batch(windows: &[EventWindow], target: Target, n: usize) -> Vec<&EventWindow> {
    let mut chosen: Vec<&EventWindow> = Vec::new();
    for c in (0..target.num_classes()).cycle().take(n) {
        let pick = windows
            .iter()
            .find(|w| w.label(target) == c && !chosen.iter().any(|p| std::ptr::eq(*p, *w)))
            .unwrap_or(&windows[chosen.len() % windows.len()]);
        chosen.push(pick);
    }
    chosen
}

fn gradient_check(ctx: &Context, windows: &[EventWindow]) -> CliResult<Check> {
    let started = Instant::now();
    let cfg = &ctx.cfg;
    let batch = class_batch(windows, Target::Task, 4);
    let mut parts = Vec::new();
    let mut metrics = BTreeMap::new();
    let mut worst = 0.0f64;
    for kind in ModelKind::ALL {
        let spec = cfg.spec_for(kind, Target::Task);
        let net = Network::new(&spec)?;
        let params = net.init(cfg.train.seed);
        let coverage = match kind {
            ModelKind::Lstm => Coverage::PerTensor {
                samples: cfg.repro.gradcheck_samples,
                seed: cfg.train.seed,
            },
            _ => Coverage::All,
        };
        let t = Instant::now();
        let r = model_grad_check(
            &net,
            &params,
            &batch,
            Rng::derive_seed(cfg.train.seed, "gradcheck"),
            coverage,
            GRAD_EPS,
        )?;
        let err = r.max_rel_error();
        worst = worst.max(err);
        let w = r.worst().map(|t| t.name.clone()).unwrap_or_default();
        parts.push(format!(
            "{kind} {err:.2e} over {} coords ({w})",
            r.checked()
        ));
        ctx.progress(
            "gradcheck",
            &[
                ("kind", kind.to_string()),
                ("max_rel_error", format!("{err:.3e}")),
                ("coords", r.checked().to_string()),
                ("seconds", format!("{:.1}", t.elapsed().as_secs_f64())),
            ],
        );
        metrics.insert(
            kind.to_string(),
            json!({ "max_rel_error": err, "coordinates": r.checked(), "worst_tensor": w }),
        );
    }
    let secs = started.elapsed().as_secs_f64();
    Ok(check(
        1,
        "gradient correctness",
        worst < GRAD_TOLERANCE && secs < GRAD_BUDGET_S,
        parts.join("; "),
        started,
        json!(metrics),
    ))
}

fn conservation(ctx: &Context) -> CliResult<Check> {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let manifest = load_manifest(ctx)?;
    for entry in &manifest {
        let path = ctx.layout.root().join(&entry.path);
        let log = read_log_csv(&path, entry, &entry.path)?;
        let m = kinespike::encoding::deltas(&log)?;
        for f in 0..m.width {
            let sum: f64 = (0..m.steps()).map(|t| m.deltas[t * m.width + f]).sum();
            let want = log.frames[log.len() - 1][f] - log.frames[0][f];
            let scale = log.frames.iter().map(|r| r[f].abs()).fold(0.0, f64::max);
            if scale > 0.0 {
                worst = worst.max((sum - want).abs() / scale);
            }
        }
    }
    Ok(check(
        2,
        "delta conservation",
        worst <= 1e-9,
        format!(
            "{} logs, worst relative residual {worst:.2e}",
            manifest.len()
        ),
        started,
        json!({ "logs": manifest.len(), "worst_relative_residual": worst }),
    ))
}

fn rate_matching() -> Check {
    let started = Instant::now();
    let model = NeuronModel::spiking_rectified_linear(1.0);
    let (steps, dt) = (1000usize, 0.001);
    let bound = 1.0 / (steps as f64 * dt);
    let mut worst = 0.0f64;
    let mut rates = Vec::new();
    for u in [0.0, 0.5, 1.0, 5.0, 50.0] {
        let mut s = NeuronState::default();
        let mut n = 0usize;
        for _ in 0..steps {
            let (next, spike) = neuron_step(s, u, &model, dt);
            s = next;
            n += usize::from(spike);
        }
        let rate = n as f64 / (steps as f64 * dt);
        worst = worst.max((rate - model.rate(u)).abs());
        rates.push(json!({ "u": u, "rate": rate }));
    }
    check(
        6,
        "rate matching",
        worst <= bound + 1e-12,
        format!("worst |rate - max(0,u)| {worst:.3} Hz, bound {bound:.3} Hz"),
        started,
        json!({ "rates": rates, "worst": worst }),
    )
}

fn sparsity(
    movements: &[MovementSequence],
    theta: &ThresholdVector,
    seed: u64,
) -> CliResult<Check> {
    let started = Instant::now();
    let raw_nz: usize = movements
        .iter()
        .map(|m| m.deltas.iter().filter(|&&d| d != 0.0).count())
        .sum();
    let total: usize = movements.iter().map(|m| m.deltas.len()).sum();
    let count = |t: &ThresholdVector| -> CliResult<usize> {
        let mut n = 0;
        for m in movements {
            n += encode_events(m, t)?
                .events
                .iter()
                .filter(|&&e| e != 0)
                .count();
        }
        Ok(n)
    };
    let event_nz = count(theta)?;
    let raw_frac = raw_nz as f64 / total as f64;
    let event_frac = event_nz as f64 / total as f64;
    let mut rng = Rng::new(Rng::derive_seed(seed, "sparsity"));
    let mut monotone = true;
    for _ in 0..20 {
        let lo: Vec<f64> = theta
            .theta
            .iter()
            .map(|t| t * rng.uniform(0.0, 3.0))
            .collect();
        let hi: Vec<f64> = lo
            .iter()
            .zip(&theta.theta)
            .map(|(l, t)| l + t.max(1e-6) * rng.uniform(0.0, 2.0))
            .collect();
        let a = count(&ThresholdVector {
            theta: lo,
            ..theta.clone()
        })?;
        let b = count(&ThresholdVector {
            theta: hi,
            ..theta.clone()
        })?;
        monotone &= b <= a;
    }
    Ok(check(
        8,
        "event sparsity",
        event_frac <= 0.5 * raw_frac && monotone,
        format!("event nonzero {event_frac:.4} vs raw {raw_frac:.4}; monotone over 20 pairs: {monotone}"),
        started,
        json!({ "event_nonzero": event_frac, "raw_nonzero": raw_frac, "monotone": monotone }),
    ))
}

fn fidelity(
    ctx: &Context,
    models: &[(ModelKind, &TrainSummary)],
    test: &[EventWindow],
) -> CliResult<Check> {
    let started = Instant::now();
    let n = ctx.cfg.repro.fidelity_windows.min(test.len());
    let refs: Vec<&EventWindow> = test[..n].iter().collect();
    let mut worst = 0.0f64;
    let mut per = BTreeMap::new();
    for (kind, summary) in models {
        let file = ModelFile::load(&summary.model)?;
        let params = file.params()?;
        let snn = convert(&file.spec, &params, ctx.cfg.sim_config())?;
        let net = Network::new(&file.spec)?;
        let reference = net.forward(&params, &refs, Mode::Eval)?;
        let inputs = snn.present(&refs)?;
        let c = file.spec.num_classes;
        let mut diff = 0.0f64;
        for (i, input) in inputs.iter().enumerate() {
            for (a, b) in snn
                .rate_logits(input)
                .iter()
                .zip(&reference.logits[i * c..(i + 1) * c])
            {
                diff = diff.max((a - b).abs());
            }
        }
        worst = worst.max(diff);
        per.insert(kind.to_string(), diff);
    }
    let detail = per
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(check(
        7,
        "conversion fidelity",
        worst < FIDELITY_TOLERANCE,
        format!("max |folded - source| logits over {n} windows: {detail}"),
        started,
        json!({ "windows": n, "max_abs_diff": per }),
    ))
}

/// Runs the full pipeline under `ctx` and returns one check per acceptance
/// property (1 to 10). Writes `repro/acceptance.json` with the measurements.
pub fn cmd_repro(ctx: &Context) -> CliResult<Vec<Check>> {
    let cfg = &ctx.cfg;
    let seeds = cfg.repro.seeds.0.clone();
    let s0 = seeds[0];
    let event_opts = cfg.encoding_for(InputMode::Event);
    let raw_opts = cfg.encoding_for(InputMode::Raw);
    let mut event_ctx = ctx.clone();
    event_ctx.cfg.encoding = event_opts.clone();
    let mut raw_ctx = ctx.clone();
    raw_ctx.cfg.encoding = raw_opts.clone();

    cmd_gen(ctx)?;
    let encode_event = cmd_encode(&event_ctx)?;
    cmd_encode(&raw_ctx)?;
    let movements = load_movements(ctx)?;
    let split = load_split(ctx, &event_opts)?;
    let mut checks = Vec::new();

    checks.push(gradient_check(ctx, &split.train)?);
    checks.push(conservation(ctx)?);

    // classification signal
    let started = Instant::now();
    let mut signal = BTreeMap::new();
    let mut ok = true;
    let mut event_task = Vec::new();
    for target in [Target::Task, Target::Operator] {
        let t = Instant::now();
        let s = train_model(ctx, &cfg.spec_for(ModelKind::Lstm, target), &event_opts, s0)?;
        let secs = t.elapsed().as_secs_f64();
        ok &= s.best_test_accuracy >= SIGNAL_THRESHOLD && secs < SIGNAL_BUDGET_S;
        signal.insert(target.to_string(), (s.best_test_accuracy, secs));
        if target == Target::Task {
            event_task.push(s);
        }
    }
    checks.push(check(
        3,
        "classification signal",
        ok,
        signal
            .iter()
            .map(|(k, (a, s))| format!("lstm {k} {a:.4} in {s:.0} s"))
            .collect::<Vec<_>>()
            .join("; "),
        started,
        json!(signal
            .iter()
            .map(|(k, (a, _))| (k.clone(), *a))
            .collect::<BTreeMap<_, _>>()),
    ));

    // encoding relation
    let started = Instant::now();
    for &seed in &seeds[1..] {
        event_task.push(train_model(
            ctx,
            &cfg.spec_for(ModelKind::Lstm, Target::Task),
            &event_opts,
            seed,
        )?);
    }
    let mut raw_task = Vec::new();
    for &seed in &seeds {
        raw_task.push(train_model(
            ctx,
            &cfg.spec_for(ModelKind::Lstm, Target::Task),
            &raw_opts,
            seed,
        )?);
    }
    let event_acc: Vec<f64> = event_task.iter().map(|s| s.best_test_accuracy).collect();
    let raw_acc: Vec<f64> = raw_task.iter().map(|s| s.best_test_accuracy).collect();
    checks.push(check(
        4,
        "event vs raw encoding",
        mean(&event_acc) >= mean(&raw_acc) - 0.02,
        format!(
            "event {:.4} vs raw {:.4} (mean of {} seeds)",
            mean(&event_acc),
            mean(&raw_acc),
            seeds.len()
        ),
        started,
        json!({ "event": event_acc, "raw": raw_acc }),
    ));

    // spiking parity
    let started = Instant::now();
    let fcn = train_model(
        ctx,
        &cfg.spec_for(ModelKind::Fcn, Target::Task),
        &event_opts,
        s0,
    )?;
    let cnn = train_model(
        ctx,
        &cfg.spec_for(ModelKind::Cnn, Target::Task),
        &event_opts,
        s0,
    )?;
    let lstm = event_task[0].clone();
    let mut parity = BTreeMap::new();
    let mut ok = true;
    let mut agreement = 0.0;
    for (kind, summary) in [
        (ModelKind::Fcn, &fcn),
        (ModelKind::Cnn, &cnn),
        (ModelKind::Lstm, &lstm),
    ] {
        let (ann, ann_eval) = eval_detailed(
            &event_ctx,
            &EvalSubject::Model(summary.model.clone()),
            false,
        )?;
        let snn_path = cmd_convert(&event_ctx, Some(&summary.model))?;
        let (snn, snn_eval) = eval_detailed(&event_ctx, &EvalSubject::Snn(snn_path), false)?;
        let agree = ann_eval
            .predictions
            .iter()
            .zip(&snn_eval.predictions)
            .filter(|(a, b)| a == b)
            .count() as f64
            / ann_eval.predictions.len() as f64;
        ok &= (snn.accuracy - ann.accuracy).abs() <= PARITY_POINTS;
        if kind == ModelKind::Fcn {
            agreement = agree;
            ok &= agree >= AGREEMENT;
        }
        parity.insert(
            kind.to_string(),
            json!({ "ann": ann.accuracy, "snn": snn.accuracy, "agreement": agree }),
        );
    }
    let detail = parity
        .iter()
        .map(|(k, v)| {
            format!(
                "{k} {:.4}->{:.4}",
                v["ann"].as_f64().unwrap(),
                v["snn"].as_f64().unwrap()
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    checks.push(check(
        5,
        "spiking parity",
        ok,
        format!("{detail}; fcn agreement {agreement:.4}"),
        started,
        json!(parity),
    ));

    checks.push(rate_matching());
    checks.push(fidelity(
        ctx,
        &[
            (ModelKind::Fcn, &fcn),
            (ModelKind::Cnn, &cnn),
            (ModelKind::Lstm, &lstm),
        ],
        &split.test,
    )?);
    let theta = ThresholdVector::from_json(
        &std::fs::read_to_string(ctx.layout.thresholds()).map_err(|e| kinespike::Error::Io {
            path: ctx.layout.thresholds(),
            source: e,
        })?,
    )?;
    let mut sparsity_check = sparsity(&movements, &theta, s0)?;
    if let Some(nz) = encode_event.nonzero_fraction {
        sparsity_check.metrics["encoded_nonzero"] = json!(nz);
    }
    checks.push(sparsity_check);

    // ablation
    let started = Instant::now();
    let camera = camera_features()[0];
    let setup = AblationSetup {
        spec: cfg.spec_for(ModelKind::Lstm, Target::Task),
        train: cfg.train.clone(),
        pipeline: event_opts.clone(),
        seeds: seeds.clone(),
    };
    let row = ablate(&movements, camera, &setup, &event_acc)?;
    ctx.progress(
        "ablate",
        &[
            ("feature", format!("\"{}\"", row.feature)),
            ("kind", "lstm".into()),
            ("delta", format!("{:.4}", row.delta())),
        ],
    );
    let mut sweep_ctx = event_ctx.clone();
    sweep_ctx.cfg.model.target = Target::Task;
    let sweep = cmd_ablate(&sweep_ctx)?;
    let rotation_max = kinespike::schema::rotation_features()
        .iter()
        .map(|&f| sweep.rows[f].delta())
        .fold(f64::NEG_INFINITY, f64::max);
    let sweep_camera = sweep.rows[camera].delta();
    checks.push(check(
        9,
        "feature ablation",
        row.delta().abs() <= ABLATION_POINTS && sweep.rows.len() == FEATURE_NAMES.len(),
        format!(
            "lstm \"{}\" delta {:+.4}; {} sweep {} rows, camera {:+.4}, top rotation {:+.4}",
            row.feature,
            row.delta(),
            sweep.kind,
            sweep.rows.len(),
            sweep_camera,
            rotation_max
        ),
        started,
        json!({
            "lstm_camera": { "feature": row.feature, "baseline": row.baseline, "ablated": row.ablated, "delta": row.delta() },
            "sweep_rows": sweep.rows.len(),
            "sweep_camera_delta": sweep_camera,
            "sweep_top_rotation_delta": rotation_max,
        }),
    ));

    // embedding
    let started = Instant::now();
    let (_, emb) = cmd_embed(&event_ctx, Some(&lstm.model))?;
    let most_compact = emb
        .spread
        .classes
        .first()
        .map(|c| c.class.clone())
        .unwrap_or_default();
    checks.push(check(
        10,
        "t-SNE embedding",
        emb.kl_final < emb.kl_initial && emb.separation_ratio > 1.0 && emb.max_entropy_error < ENTROPY_TOLERANCE,
        format!(
            "{} points, entropy error {:.1e}, KL {:.3} -> {:.3}, separation ratio {:.3}, most compact class {most_compact}",
            emb.points, emb.max_entropy_error, emb.kl_initial, emb.kl_final, emb.separation_ratio
        ),
        started,
        json!(emb),
    ));

    let lstm_operator = model_stem(ModelKind::Lstm, Target::Operator, InputMode::Event, s0);
    let artifact = json!({
        "checks": checks,
        "models": {
            "lstm_task": crate::commands::stem_of(&lstm.model),
            "lstm_operator": lstm_operator,
        },
    });
    write(
        &ctx.layout.root().join("repro").join("acceptance.json"),
        to_json(&artifact),
    )?;
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kinespike::{OperatorId, TaskId};

    fn window(task: usize, start: usize) -> EventWindow {
        EventWindow {
            x: vec![0.0; 4],
            length: 2,
            width: 2,
            task: TaskId::ALL[task],
            operator: OperatorId::ALL[0],
            log_id: format!("log{task}"),
            start,
        }
    }

    #[test]
    fn batch_has_one_window_per_class() {
        let windows: Vec<EventWindow> = (0..12).map(|i| window(3 - i % 4, i)).collect();
        let batch = class_batch(&windows, Target::Task, 4);
        let labels: Vec<usize> = batch.iter().map(|w| w.label(Target::Task)).collect();
        assert_eq!(labels, vec![0, 1, 2, 3]);
        assert_eq!(batch[0].start, 3);
    }

    #[test]
    fn rate_matching_passes() {
        let c = rate_matching();
        assert!(c.passed, "{}", c.detail);
        assert_eq!(c.id, 6);
    }

    #[test]
    fn check_line_format() {
        let c = Check {
            id: 2,
            name: "delta conservation".into(),
            passed: false,
            detail: "x".into(),
            seconds: 1.25,
            metrics: json!({}),
        };
        assert!(c.line().starts_with("FAIL  2 delta conservation"));
        let s = serde_json::to_string(&c).unwrap();
        assert!(!s.contains("seconds"));
    }
}
