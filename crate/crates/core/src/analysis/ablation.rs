use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::svg::Svg;
use crate::encoding::{prepare, MovementSequence, PipelineOptions};
use crate::error::{Error, Result};
use crate::nets::{train, ModelKind, ModelSpec, TrainConfig};
use crate::schema::Target;

/// Everything held fixed between the baseline and an ablated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSetup {
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub pipeline: PipelineOptions,
    /// Training seeds; each row averages over all of them.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub feature_index: usize,
    pub feature: String,
    /// Per-seed test accuracies.
    pub baseline: Vec<f64>,
    pub ablated: Vec<f64>,
}

impl AblationRow {
    pub fn baseline_mean(&self) -> f64 {
        mean(&self.baseline)
    }

    pub fn ablated_mean(&self) -> f64 {
        mean(&self.ablated)
    }

    /// Accuracy lost by removing the feature.
    pub fn delta(&self) -> f64 {
        self.baseline_mean() - self.ablated_mean()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub kind: ModelKind,
    pub target: Target,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn accuracies(
    movements: &[MovementSequence],
    names: &[String],
    setup: &AblationSetup,
) -> Result<Vec<f64>> {
    let prepared = prepare(movements, names, &setup.pipeline)?;
    let spec = setup.spec.clone().with_features(names.to_vec());
    setup
        .seeds
        .iter()
        .map(|&seed| {
            let cfg = TrainConfig {
                seed,
                ..setup.train.clone()
            };
            let (_, history) = train(&spec, &prepared.split, &cfg)?;
            Ok(history.best().map_or(0.0, |(_, a)| a))
        })
        .collect()
}

fn check(movements: &[MovementSequence], setup: &AblationSetup) -> Result<usize> {
    if setup.seeds.is_empty() {
        return Err(Error::Input("ablation needs at least one seed".into()));
    }
    let width = movements
        .first()
        .ok_or_else(|| Error::Input("no movement sequences".into()))?
        .width;
    if width != setup.spec.input_width() {
        return Err(Error::Schema(format!(
            "movements have {width} features, spec expects {}",
            setup.spec.input_width()
        )));
    }
    Ok(width)
}

/// Per-seed accuracy with every feature present.
pub fn baseline(movements: &[MovementSequence], setup: &AblationSetup) -> Result<Vec<f64>> {
    check(movements, setup)?;
    accuracies(movements, &setup.spec.input_features, setup)
}

/// Retrains with column `feature_index` removed before encoding and compares
/// against the supplied baseline accuracies.
pub fn ablate(
    movements: &[MovementSequence],
    feature_index: usize,
    setup: &AblationSetup,
    baseline: &[f64],
) -> Result<AblationRow> {
    let width = check(movements, setup)?;
    if feature_index >= width {
        return Err(Error::Input(format!(
            "feature {feature_index} outside {width} columns"
        )));
    }
    if baseline.len() != setup.seeds.len() {
        return Err(Error::Input(
            "one baseline accuracy per seed required".into(),
        ));
    }
    let reduced: Vec<MovementSequence> = movements
        .iter()
        .map(|m| m.without_feature(feature_index))
        .collect();
    let mut names = setup.spec.input_features.clone();
    let feature = names.remove(feature_index);
    let ablated = accuracies(&reduced, &names, setup)?;
    Ok(AblationRow {
        feature_index,
        feature,
        baseline: baseline.to_vec(),
        ablated,
    })
}

/// Leave-one-feature-out over every column, `jobs` rows at a time.
/// `progress` receives each finished row.
pub fn ablation_sweep(
    movements: &[MovementSequence],
    setup: &AblationSetup,
    jobs: usize,
    progress: impl Fn(&AblationRow) + Sync,
) -> Result<AblationReport> {
    let width = check(movements, setup)?;
    let base = baseline(movements, setup)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<AblationRow>>>> =
        Mutex::new((0..width).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, width) {
            scope.spawn(|| loop {
                let f = next.fetch_add(1, Ordering::Relaxed);
                if f >= width {
                    break;
                }
                let row = ablate(movements, f, setup, &base);
                if let Ok(r) = &row {
                    progress(r);
                }
                results.lock().expect("no poisoned workers")[f] = Some(row);
            });
        }
    });
    let rows = results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every feature visited"))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport {
        kind: setup.spec.kind,
        target: setup.spec.target,
        seeds: setup.seeds.clone(),
        rows,
    })
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature_index,feature,baseline,ablated,delta\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                r.feature_index,
                r.feature,
                r.baseline_mean(),
                r.ablated_mean(),
                r.delta()
            ));
        }
        s
    }

    /// Horizontal bars of accuracy difference around a zero axis.
    pub fn to_svg(&self) -> String {
        let (left, top, row_h, half) = (170.0, 50.0, 22.0, 200.0);
        let height = top + row_h * self.rows.len() as f64 + 40.0;
        let mut svg = Svg::new(left + 2.0 * half + 40.0, height);
        svg.text(
            left + half,
            25.0,
            15.0,
            "middle",
            &format!(
                "{} {} feature importance (accuracy drop)",
                self.kind, self.target
            ),
        );
        let scale = self
            .rows
            .iter()
            .map(|r| r.delta().abs())
            .fold(0.0, f64::max)
            .max(1e-3);
        let zero = left + half;
        for (i, r) in self.rows.iter().enumerate() {
            let y = top + i as f64 * row_h;
            let w = r.delta() / scale * half;
            let (x, fill) = if w >= 0.0 {
                (zero, "#d62728")
            } else {
                (zero + w, "#1f77b4")
            };
            svg.rect(x, y + 3.0, w.abs(), row_h - 6.0, fill);
            svg.text(left - 6.0, y + row_h / 2.0 + 4.0, 11.0, "end", &r.feature);
            svg.text(
                zero + half + 4.0,
                y + row_h / 2.0 + 4.0,
                10.0,
                "start",
                &format!("{:+.2}", 100.0 * r.delta()),
            );
        }
        svg.line(zero, top, zero, height - 40.0);
        svg.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(b: &[f64], a: &[f64]) -> AblationRow {
        AblationRow {
            feature_index: 0,
            feature: "f".into(),
            baseline: b.to_vec(),
            ablated: a.to_vec(),
        }
    }

    #[test]
    fn delta_is_baseline_minus_ablated() {
        let r = row(&[0.8, 0.6], &[0.5, 0.5]);
        assert!((r.delta() - 0.2).abs() < 1e-12);
        assert!(row(&[0.5], &[0.7]).delta() < 0.0);
    }

    #[test]
    fn csv_and_svg_have_one_entry_per_row() {
        let report = AblationReport {
            kind: ModelKind::Fcn,
            target: Target::Task,
            seeds: vec![1],
            rows: (0..20)
                .map(|i| AblationRow {
                    feature_index: i,
                    ..row(&[0.5], &[0.5 - i as f64 / 100.0])
                })
                .collect(),
        };
        assert_eq!(report.to_csv().lines().count(), 21);
        assert_eq!(report.to_svg().matches("<rect").count(), 21);
    }
}
