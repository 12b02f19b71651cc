#![allow(dead_code)]

use kinespike::datagen::{generate_dataset_with, DatasetConfig};
use kinespike::encoding::{deltas, prepare, MovementSequence, PipelineOptions, Prepared};
use kinespike::nets::{train, ModelKind, ModelParams, ModelSpec, TrainConfig};
use kinespike::{Target, FEATURE_NAMES};

pub fn small_movements() -> Vec<MovementSequence> {
    let ds = generate_dataset_with(&DatasetConfig {
        reps_per_cell: 3,
        base_seed: 11,
        min_duration_s: 20.0,
        max_duration_s: 30.0,
        camera_motion: false,
    })
    .unwrap();
    ds.logs.iter().map(|l| deltas(l).unwrap()).collect()
}

pub fn names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn small_prepared() -> Prepared {
    let opts = PipelineOptions {
        holdout_exercises_per_cell: 1,
        ..PipelineOptions::default()
    };
    prepare(&small_movements(), &names(), &opts).unwrap()
}

/// A briefly trained model, so batch-norm statistics and weights are far from
/// their initial values.
pub fn trained(kind: ModelKind, prepared: &Prepared) -> (ModelSpec, ModelParams) {
    trained_for(kind, prepared, 2, 6)
}

pub fn trained_for(
    kind: ModelKind,
    prepared: &Prepared,
    epochs: usize,
    batches: usize,
) -> (ModelSpec, ModelParams) {
    let spec = ModelSpec::new(kind, Target::Task);
    let cfg = TrainConfig {
        max_epochs: epochs,
        batches_per_epoch: batches,
        learning_rate: 3e-3,
        seed: 5,
        ..TrainConfig::default()
    };
    let (params, _) = train(&spec, &prepared.split, &cfg).unwrap();
    (spec, params)
}
