//! Generation through encoding and splitting on generated corpora.

mod common;

use std::collections::BTreeSet;

use kinespike::analysis::confusion;
use kinespike::datagen::{generate_dataset, generate_dataset_with, DatasetConfig};
use kinespike::encoding::{deltas, encode_events, prepare, sparsity, PipelineOptions};
use kinespike::nets::{evaluate, train, ModelKind, ModelSpec, TrainConfig};
use kinespike::Target;

#[test]
fn default_split_holds_out_whole_exercises() {
    let ds = generate_dataset(8, 42).unwrap();
    assert_eq!(ds.logs.len(), 128);
    let movements: Vec<_> = ds.logs.iter().map(|l| deltas(l).unwrap()).collect();
    let prepared = prepare(&movements, &common::names(), &PipelineOptions::default()).unwrap();
    let split = &prepared.split;
    let test_logs: BTreeSet<&str> = split.test.iter().map(|w| w.log_id.as_str()).collect();
    let train_logs: BTreeSet<&str> = split.train.iter().map(|w| w.log_id.as_str()).collect();
    assert_eq!(test_logs.len(), 32);
    assert_eq!(train_logs.len(), 96);
    assert!(test_logs.is_disjoint(&train_logs));

    let again = prepare(&movements, &common::names(), &PipelineOptions::default()).unwrap();
    assert_eq!(again.split.plan, split.plan);
    assert_eq!(again.split.train, split.train);

    // the event stream is sparser than the raw deltas on every log
    let theta = prepared.thresholds().unwrap();
    for m in movements.iter().step_by(9) {
        let raw = m.deltas.iter().filter(|&&d| d != 0.0).count() as f64 / m.deltas.len() as f64;
        let ev = sparsity(&encode_events(m, theta).unwrap());
        assert!(ev < raw, "{}: {ev} vs {raw}", m.log_id);
    }
}

#[test]
fn every_generated_log_telescopes() {
    let ds = generate_dataset_with(&DatasetConfig {
        reps_per_cell: 2,
        base_seed: 3,
        camera_motion: true,
        ..DatasetConfig::default()
    })
    .unwrap();
    for log in &ds.logs {
        let m = deltas(log).unwrap();
        for f in 0..m.width {
            let sum: f64 = (0..m.steps()).map(|t| m.deltas[t * m.width + f]).sum();
            let want = log.frames[log.len() - 1][f] - log.frames[0][f];
            let scale = log.frames.iter().map(|r| r[f].abs()).fold(1e-300, f64::max);
            assert!((sum - want).abs() <= 1e-9 * scale, "{} feature {f}", log.id);
        }
    }
}

#[test]
fn training_history_and_confusion_agree() {
    let prepared = common::small_prepared();
    let spec = ModelSpec::new(ModelKind::Fcn, Target::Operator);
    let cfg = TrainConfig {
        max_epochs: 4,
        patience: 1,
        batches_per_epoch: 8,
        ..TrainConfig::default()
    };
    let (params, history) = train(&spec, &prepared.split, &cfg).unwrap();
    let epochs = history.epochs();
    assert!((1..=4).contains(&epochs));
    assert_eq!(history.train_accuracy.len(), epochs);
    assert_eq!(history.test_accuracy.len(), epochs);
    let eval = evaluate(&spec, &params, &prepared.split.test).unwrap();
    assert_eq!(eval.accuracy, history.best().unwrap().1);
    let cm = confusion(
        &eval.predictions,
        &eval.labels,
        &Target::Operator.class_names(),
    )
    .unwrap();
    assert_eq!(cm.accuracy(), eval.accuracy);
    assert_eq!(cm.total() as usize, prepared.split.test.len());
}
