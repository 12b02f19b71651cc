mod common;

use kinespike::analysis::{ablate, ablation_sweep, baseline, AblationSetup};
use kinespike::encoding::PipelineOptions;
use kinespike::nets::{ModelKind, ModelSpec, TrainConfig};
use kinespike::schema::{camera_features, rotation_features};
use kinespike::Target;

fn setup(kind: ModelKind) -> AblationSetup {
    AblationSetup {
        spec: ModelSpec::new(kind, Target::Task),
        train: TrainConfig {
            max_epochs: 2,
            batches_per_epoch: 5,
            ..TrainConfig::default()
        },
        pipeline: PipelineOptions {
            holdout_exercises_per_cell: 1,
            ..PipelineOptions::default()
        },
        seeds: vec![1, 2],
    }
}

#[test]
fn zero_motion_feature_changes_nothing() {
    let movements = common::small_movements();
    for kind in ModelKind::ALL {
        let s = setup(kind);
        let base = baseline(&movements, &s).unwrap();
        for f in camera_features().into_iter().take(2) {
            let row = ablate(&movements, f, &s, &base).unwrap();
            assert_eq!(row.ablated, row.baseline, "{kind} {}", row.feature);
            assert_eq!(row.delta(), 0.0);
        }
    }
}

#[test]
fn rows_are_reproducible_and_sweep_is_complete() {
    let movements = common::small_movements();
    let s = setup(ModelKind::Fcn);
    let base = baseline(&movements, &s).unwrap();
    let f = rotation_features()[0];
    let a = ablate(&movements, f, &s, &base).unwrap();
    let b = ablate(&movements, f, &s, &base).unwrap();
    assert_eq!(a, b);

    let seen = std::sync::atomic::AtomicUsize::new(0);
    let report = ablation_sweep(&movements, &s, 2, |_| {
        seen.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    })
    .unwrap();
    assert_eq!(report.rows.len(), 20);
    assert_eq!(seen.into_inner(), 20);
    assert_eq!(report.rows[f], a);
    let indices: Vec<usize> = report.rows.iter().map(|r| r.feature_index).collect();
    assert_eq!(indices, (0..20).collect::<Vec<_>>());
    assert_eq!(report.to_csv().lines().count(), 21);
}
