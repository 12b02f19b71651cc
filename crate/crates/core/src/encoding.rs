//! Movement deltas, threshold events, fixed-length windows and the
//! leak-free train/test split.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::datagen::KinematicLog;
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::schema::{OperatorId, Target, TaskId, FEATURE_NAMES, NUM_FEATURES};

pub const DEFAULT_WINDOW: usize = 40;
pub const DEFAULT_STRIDE: usize = 20;
pub const DEFAULT_FRACTION: f64 = 0.5;

/// Per-step signed changes; row `t` is `frames[t+1] - frames[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementSequence {
    pub log_id: String,
    pub task: TaskId,
    pub operator: OperatorId,
    pub width: usize,
    /// Row-major `steps × width`.
    pub deltas: Vec<f64>,
}

impl MovementSequence {
    pub fn steps(&self) -> usize {
        self.deltas.len() / self.width
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.deltas[t * self.width..(t + 1) * self.width]
    }

    /// Copy with column `feature` removed.
    pub fn without_feature(&self, feature: usize) -> MovementSequence {
        MovementSequence {
            deltas: drop_column(&self.deltas, self.width, feature),
            width: self.width - 1,
            ..self.clone()
        }
    }

    /// Fraction of nonzero deltas.
    pub fn nonzero_fraction(&self) -> f64 {
        let nz = self.deltas.iter().filter(|&&d| d != 0.0).count();
        nz as f64 / self.deltas.len().max(1) as f64
    }
}

fn drop_column(data: &[f64], width: usize, col: usize) -> Vec<f64> {
    data.chunks(width)
        .flat_map(|row| {
            row.iter()
                .enumerate()
                .filter(move |(c, _)| *c != col)
                .map(|(_, v)| *v)
        })
        .collect()
}

/// Computes frame-to-frame movement.
pub fn deltas(log: &KinematicLog) -> Result<MovementSequence> {
    if log.frames.len() < 2 {
        return Err(Error::Input(format!(
            "log {} has {} frames, need at least 2",
            log.id,
            log.frames.len()
        )));
    }
    let mut out = Vec::with_capacity((log.frames.len() - 1) * NUM_FEATURES);
    for w in log.frames.windows(2) {
        out.extend((0..NUM_FEATURES).map(|f| w[1][f] - w[0][f]));
    }
    Ok(MovementSequence {
        log_id: log.id.clone(),
        task: log.task,
        operator: log.operator,
        width: NUM_FEATURES,
        deltas: out,
    })
}

/// Per-feature event thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    pub calibration_fraction: f64,
}

impl ThresholdVector {
    pub fn without_feature(&self, feature: usize) -> ThresholdVector {
        let mut t = self.clone();
        t.names.remove(feature);
        t.theta.remove(feature);
        t
    }

    /// JSON object `{feature_name: theta, ..., "fraction": f}`.
    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        for (n, t) in self.names.iter().zip(&self.theta) {
            map.insert(n.clone(), serde_json::json!(t));
        }
        map.insert(
            "fraction".into(),
            serde_json::json!(self.calibration_fraction),
        );
        serde_json::to_string_pretty(&map).expect("threshold map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, f64> =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("thresholds: {e}")))?;
        let fraction = *map
            .get("fraction")
            .ok_or_else(|| Error::Format("thresholds: missing `fraction`".into()))?;
        let mut theta = Vec::with_capacity(NUM_FEATURES);
        for name in FEATURE_NAMES {
            let v = map
                .get(name)
                .ok_or_else(|| Error::Schema(format!("thresholds: missing `{name}`")))?;
            theta.push(*v);
        }
        Ok(Self {
            names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            theta,
            calibration_fraction: fraction,
        })
    }
}

/// `theta[f] = fraction × mean |Δ_f|` over every step of every sequence.
pub fn calibrate_thresholds<'a>(
    corpus: impl IntoIterator<Item = &'a MovementSequence>,
    fraction: f64,
) -> Result<ThresholdVector> {
    let corpus: Vec<&MovementSequence> = corpus.into_iter().collect();
    let first = corpus
        .first()
        .ok_or_else(|| Error::Input("empty calibration corpus".into()))?;
    if !(fraction > 0.0 && fraction.is_finite()) {
        return Err(Error::Input(format!(
            "fraction must be positive, got {fraction}"
        )));
    }
    let width = first.width;
    let mut sums = vec![0.0; width];
    let mut steps = 0usize;
    for seq in corpus {
        if seq.width != width {
            return Err(Error::Schema("mixed sequence widths in corpus".into()));
        }
        // per-log partial sums, combined in corpus order
        let mut part = vec![0.0; width];
        for row in seq.deltas.chunks(width) {
            for (p, d) in part.iter_mut().zip(row) {
                *p += d.abs();
            }
        }
        for (s, p) in sums.iter_mut().zip(&part) {
            *s += p;
        }
        steps += seq.steps();
    }
    if steps == 0 {
        return Err(Error::Input("calibration corpus has no steps".into()));
    }
    let names = if width == NUM_FEATURES {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..width).map(|i| format!("feature{i}")).collect()
    };
    Ok(ThresholdVector {
        names,
        theta: sums.iter().map(|s| fraction * s / steps as f64).collect(),
        calibration_fraction: fraction,
    })
}

/// Binary events, row-major `steps × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    pub log_id: String,
    pub task: TaskId,
    pub operator: OperatorId,
    pub width: usize,
    pub events: Vec<u8>,
}

impl EventSequence {
    pub fn steps(&self) -> usize {
        self.events.len() / self.width
    }
}

/// `1` where `|Δ| > θ` (strictly), else `0`.
pub fn encode_events(
    movements: &MovementSequence,
    theta: &ThresholdVector,
) -> Result<EventSequence> {
    if theta.theta.len() != movements.width {
        return Err(Error::Schema(format!(
            "threshold has {} features, movements {}",
            theta.theta.len(),
            movements.width
        )));
    }
    let events = movements
        .deltas
        .chunks(movements.width)
        .flat_map(|row| {
            row.iter()
                .zip(&theta.theta)
                .map(|(d, t)| u8::from(d.abs() > *t))
        })
        .collect();
    Ok(EventSequence {
        log_id: movements.log_id.clone(),
        task: movements.task,
        operator: movements.operator,
        width: movements.width,
        events,
    })
}

/// Fraction of entries equal to one.
pub fn sparsity(events: &EventSequence) -> f64 {
    let ones = events.events.iter().filter(|&&e| e == 1).count();
    ones as f64 / events.events.len().max(1) as f64
}

/// Model input: `length × width` values plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWindow {
    pub x: Vec<f64>,
    pub length: usize,
    pub width: usize,
    pub task: TaskId,
    pub operator: OperatorId,
    pub log_id: String,
    pub start: usize,
}

impl EventWindow {
    pub fn label(&self, target: Target) -> usize {
        match target {
            Target::Task => self.task.index(),
            Target::Operator => self.operator.index(),
        }
    }
}

/// Number of windows `window` produces.
pub fn window_count(steps: usize, length: usize, stride: usize) -> usize {
    if steps < length {
        0
    } else {
        (steps - length) / stride + 1
    }
}

fn window_rows(
    data: &[f64],
    width: usize,
    length: usize,
    stride: usize,
    meta: (&str, TaskId, OperatorId),
) -> Result<Vec<EventWindow>> {
    if length == 0 || stride == 0 {
        return Err(Error::Input(
            "window length and stride must be at least 1".into(),
        ));
    }
    let steps = data.len() / width;
    Ok((0..window_count(steps, length, stride))
        .map(|i| {
            let start = i * stride;
            EventWindow {
                x: data[start * width..(start + length) * width].to_vec(),
                length,
                width,
                task: meta.1,
                operator: meta.2,
                log_id: meta.0.to_string(),
                start,
            }
        })
        .collect())
}

/// Slices events into windows at offsets `0, stride, 2·stride, …`; the tail is dropped.
pub fn window(events: &EventSequence, length: usize, stride: usize) -> Result<Vec<EventWindow>> {
    let data: Vec<f64> = events.events.iter().map(|&e| f64::from(e)).collect();
    window_rows(
        &data,
        events.width,
        length,
        stride,
        (&events.log_id, events.task, events.operator),
    )
}

/// Windows over raw deltas (the unthresholded input mode).
pub fn window_raw(
    movements: &MovementSequence,
    length: usize,
    stride: usize,
) -> Result<Vec<EventWindow>> {
    window_rows(
        &movements.deltas,
        movements.width,
        length,
        stride,
        (&movements.log_id, movements.task, movements.operator),
    )
}

/// Per-feature standardization fitted on training movements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl RawScaler {
    pub fn fit(corpus: &[&MovementSequence]) -> Result<Self> {
        let width = corpus
            .first()
            .ok_or_else(|| Error::Input("empty corpus".into()))?
            .width;
        let mut sum = vec![0.0; width];
        let mut n = 0usize;
        for seq in corpus {
            for row in seq.deltas.chunks(width) {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
                n += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; width];
        for seq in corpus {
            for row in seq.deltas.chunks(width) {
                for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m).powi(2);
                }
            }
        }
        let std = sq.iter().map(|s| (s / n as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    /// Standardizes a window in place; zero-variance features map to 0.
    pub fn apply(&self, w: &mut EventWindow) {
        for row in w.x.chunks_mut(w.width) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if *s > 0.0 { (*v - m) / s } else { 0.0 };
            }
        }
    }
}

/// Which whole exercises go to test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub holdout_exercises_per_cell: usize,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitPlan {
    /// Holds out `holdout` logs per (task, operator) cell by seeded draw.
    pub fn stratified(
        logs: &[(String, TaskId, OperatorId)],
        holdout: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut cells: BTreeMap<(TaskId, OperatorId), BTreeSet<String>> = BTreeMap::new();
        for &t in TaskId::ALL {
            for &o in OperatorId::ALL {
                cells.insert((t, o), BTreeSet::new());
            }
        }
        for (id, t, o) in logs {
            cells
                .get_mut(&(*t, *o))
                .expect("all cells present")
                .insert(id.clone());
        }
        let rng = Rng::new(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for ((t, o), ids) in &cells {
            if ids.len() <= holdout {
                return Err(Error::Input(format!(
                    "cell {t}/{o} has {} exercises, need more than {holdout}",
                    ids.len()
                )));
            }
            let mut ids: Vec<String> = ids.iter().cloned().collect();
            rng.stream(&format!("{t}/{o}")).shuffle(&mut ids);
            let (held, kept) = ids.split_at(holdout);
            test.extend_from_slice(held);
            train.extend_from_slice(kept);
        }
        train.sort();
        test.sort();
        Ok(Self {
            holdout_exercises_per_cell: holdout,
            seed,
            train,
            test,
        })
    }

    pub fn apply(&self, windows: Vec<EventWindow>) -> DatasetSplit {
        let test_ids: BTreeSet<&str> = self.test.iter().map(String::as_str).collect();
        let (test, train) = windows
            .into_iter()
            .partition(|w| test_ids.contains(w.log_id.as_str()));
        DatasetSplit {
            train,
            test,
            plan: self.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<EventWindow>,
    pub test: Vec<EventWindow>,
    pub plan: SplitPlan,
}

/// Splits windows so every exercise lands wholly in train or test.
pub fn split_stratified(
    windows: Vec<EventWindow>,
    holdout: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    let mut logs: BTreeMap<String, (TaskId, OperatorId)> = BTreeMap::new();
    for w in &windows {
        logs.insert(w.log_id.clone(), (w.task, w.operator));
    }
    let logs: Vec<_> = logs.into_iter().map(|(id, (t, o))| (id, t, o)).collect();
    Ok(SplitPlan::stratified(&logs, holdout, seed)?.apply(windows))
}

/// Model input representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Thresholded binary events.
    Event,
    /// Standardized raw deltas.
    Raw,
}

impl std::fmt::Display for InputMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InputMode::Event => "event",
            InputMode::Raw => "raw",
        })
    }
}

impl std::str::FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "event" => Ok(InputMode::Event),
            "raw" => Ok(InputMode::Raw),
            _ => Err(Error::Schema(format!("unknown input mode `{s}`"))),
        }
    }
}

/// Settings turning movement sequences into a train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub mode: InputMode,
    pub fraction: f64,
    pub window_length: usize,
    pub stride: usize,
    pub holdout_exercises_per_cell: usize,
    pub split_seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            mode: InputMode::Event,
            fraction: DEFAULT_FRACTION,
            window_length: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            holdout_exercises_per_cell: 2,
            split_seed: 42,
        }
    }
}

/// Per-feature transform fitted on the training exercises.
#[derive(Debug, Clone, PartialEq)]
pub enum Calibration {
    Thresholds(ThresholdVector),
    Scaler(RawScaler),
}

impl Calibration {
    pub fn mode(&self) -> InputMode {
        match self {
            Calibration::Thresholds(_) => InputMode::Event,
            Calibration::Scaler(_) => InputMode::Raw,
        }
    }
}

/// Output of [`prepare`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: DatasetSplit,
    pub feature_names: Vec<String>,
    pub calibration: Calibration,
    /// Encoded sequences in input order (event mode only).
    pub events: Vec<EventSequence>,
}

impl Prepared {
    pub fn thresholds(&self) -> Option<&ThresholdVector> {
        match &self.calibration {
            Calibration::Thresholds(t) => Some(t),
            Calibration::Scaler(_) => None,
        }
    }
}

/// Holds out whole exercises per cell and fits the calibration on the rest.
pub fn calibrate(
    movements: &[MovementSequence],
    feature_names: &[String],
    opts: &PipelineOptions,
) -> Result<(SplitPlan, Calibration)> {
    if movements.is_empty() {
        return Err(Error::Input("no movement sequences".into()));
    }
    let logs: Vec<(String, TaskId, OperatorId)> = movements
        .iter()
        .map(|m| (m.log_id.clone(), m.task, m.operator))
        .collect();
    let plan = SplitPlan::stratified(&logs, opts.holdout_exercises_per_cell, opts.split_seed)?;
    let test_ids: BTreeSet<&str> = plan.test.iter().map(String::as_str).collect();
    let train: Vec<&MovementSequence> = movements
        .iter()
        .filter(|m| !test_ids.contains(m.log_id.as_str()))
        .collect();
    let calibration = match opts.mode {
        InputMode::Event => {
            let mut theta = calibrate_thresholds(train.iter().copied(), opts.fraction)?;
            theta.names = feature_names.to_vec();
            Calibration::Thresholds(theta)
        }
        InputMode::Raw => Calibration::Scaler(RawScaler::fit(&train)?),
    };
    Ok((plan, calibration))
}

/// Encodes and windows every sequence with a fitted calibration, then
/// partitions the windows by `plan`.
pub fn materialize(
    movements: &[MovementSequence],
    plan: &SplitPlan,
    calibration: &Calibration,
    opts: &PipelineOptions,
) -> Result<(DatasetSplit, Vec<EventSequence>)> {
    let mut windows = Vec::new();
    let mut events = Vec::new();
    for m in movements {
        match calibration {
            Calibration::Thresholds(theta) => {
                let ev = encode_events(m, theta)?;
                windows.extend(window(&ev, opts.window_length, opts.stride)?);
                events.push(ev);
            }
            Calibration::Scaler(sc) => {
                for mut w in window_raw(m, opts.window_length, opts.stride)? {
                    sc.apply(&mut w);
                    windows.push(w);
                }
            }
        }
    }
    Ok((plan.apply(windows), events))
}

/// [`calibrate`] followed by [`materialize`].
pub fn prepare(
    movements: &[MovementSequence],
    feature_names: &[String],
    opts: &PipelineOptions,
) -> Result<Prepared> {
    let (plan, calibration) = calibrate(movements, feature_names, opts)?;
    let (split, events) = materialize(movements, &plan, &calibration, opts)?;
    Ok(Prepared {
        split,
        feature_names: feature_names.to_vec(),
        calibration,
        events,
    })
}

/// Event CSV under the feature header.
pub fn events_to_csv(events: &EventSequence, names: &[String]) -> String {
    let mut buf = Vec::new();
    crate::datagen::write_feature_csv(
        &mut buf,
        names,
        events
            .events
            .chunks(events.width)
            .map(|r| r.iter().map(|e| e.to_string()).collect()),
    )
    .expect("writing to memory");
    String::from_utf8(buf).expect("ascii csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_log;
    use proptest::prelude::*;

    fn log_from(frames: Vec<[f64; NUM_FEATURES]>) -> KinematicLog {
        KinematicLog {
            id: "t".into(),
            task: TaskId::PegBoard,
            operator: OperatorId::B,
            sample_rate_hz: 30.0,
            seed: 0,
            frames,
        }
    }

    fn seq(width: usize, deltas: Vec<f64>) -> MovementSequence {
        MovementSequence {
            log_id: "s".into(),
            task: TaskId::PickAndPlace,
            operator: OperatorId::A,
            width,
            deltas,
        }
    }

    fn thresholds(theta: Vec<f64>) -> ThresholdVector {
        ThresholdVector {
            names: (0..theta.len()).map(|i| i.to_string()).collect(),
            theta,
            calibration_fraction: 1.0,
        }
    }

    #[test]
    fn constant_log_has_zero_deltas() {
        let m = deltas(&log_from(vec![[1.5; NUM_FEATURES]; 5])).unwrap();
        assert_eq!(m.steps(), 4);
        assert!(m.deltas.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn simple_differences() {
        let mut frames = vec![[0.0; NUM_FEATURES]; 3];
        frames[1][0] = 1.0;
        frames[2][0] = 3.0;
        let m = deltas(&log_from(frames)).unwrap();
        assert_eq!((m.row(0)[0], m.row(1)[0]), (1.0, 2.0));
        assert!(matches!(
            deltas(&log_from(vec![[0.0; NUM_FEATURES]])),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn telescoping_on_generated_log() {
        let log = generate_log(TaskId::ThreadTheRings, OperatorId::C, 60.0, 42).unwrap();
        let m = deltas(&log).unwrap();
        let mut worst = 0.0f64;
        for f in 0..NUM_FEATURES {
            let s: f64 = (0..m.steps()).map(|t| m.row(t)[f]).sum();
            let want = log.frames[log.len() - 1][f] - log.frames[0][f];
            worst = worst.max((s - want).abs());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn calibration_examples() {
        let mut d = vec![0.0; NUM_FEATURES * 2];
        d[12] = 0.020905;
        d[NUM_FEATURES + 12] = -0.020905;
        let t = calibrate_thresholds(&[seq(NUM_FEATURES, d)], 0.5).unwrap();
        assert!((t.theta[12] - 0.0104525).abs() < 1e-15);
        assert_eq!(t.names[12], "Tool Left Z");
        assert!(t
            .theta
            .iter()
            .enumerate()
            .all(|(f, v)| f == 12 || *v == 0.0));
        assert!(calibrate_thresholds(&[], 0.5).is_err());
        assert!(calibrate_thresholds(&[seq(2, vec![1.0, 1.0])], 0.0).is_err());
    }

    #[test]
    fn fraction_one_recovers_means() {
        let logs: Vec<_> = [1u64, 2, 3]
            .iter()
            .map(|&s| {
                deltas(&generate_log(TaskId::RingAndRail, OperatorId::A, 10.0, s).unwrap()).unwrap()
            })
            .collect();
        let t = calibrate_thresholds(&logs, 1.0).unwrap();
        for f in 0..NUM_FEATURES {
            let all: Vec<f64> = logs
                .iter()
                .flat_map(|m| (0..m.steps()).map(move |r| m.row(r)[f].abs()))
                .collect();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            assert!((t.theta[f] - mean).abs() <= 1e-12 * mean.max(1e-300));
        }
    }

    #[test]
    fn strict_threshold() {
        let mut d = vec![0.0; NUM_FEATURES * 2];
        d[12] = 0.02;
        d[NUM_FEATURES + 12] = 0.0104525;
        let mut theta = vec![0.0; NUM_FEATURES];
        theta[12] = 0.0104525;
        let e = encode_events(&seq(NUM_FEATURES, d), &thresholds(theta)).unwrap();
        assert_eq!(e.events[12], 1);
        assert_eq!(e.events[NUM_FEATURES + 12], 0);
        assert_eq!(e.events.iter().map(|&x| x as usize).sum::<usize>(), 1);
        assert!(matches!(
            encode_events(
                &seq(NUM_FEATURES, vec![0.0; NUM_FEATURES]),
                &thresholds(vec![0.0; 3])
            ),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn window_counts() {
        let ev = |steps: usize| EventSequence {
            log_id: "x".into(),
            task: TaskId::PegBoard,
            operator: OperatorId::D,
            width: 2,
            events: vec![0; steps * 2],
        };
        assert_eq!(window(&ev(3999), 40, 20).unwrap().len(), 198);
        assert_eq!(window(&ev(40), 40, 20).unwrap().len(), 1);
        assert_eq!(window(&ev(39), 40, 20).unwrap().len(), 0);
        assert!(window(&ev(10), 0, 1).is_err());
        let w = window(&ev(100), 40, 20).unwrap();
        assert_eq!(w[2].start, 40);
        assert_eq!(w[2].operator, OperatorId::D);
        assert_eq!(w[2].x.len(), 80);
    }

    #[test]
    fn sparsity_extremes() {
        let mut e = EventSequence {
            log_id: "x".into(),
            task: TaskId::PegBoard,
            operator: OperatorId::D,
            width: 4,
            events: vec![0; 8],
        };
        assert_eq!(sparsity(&e), 0.0);
        e.events = vec![1; 8];
        assert_eq!(sparsity(&e), 1.0);
    }

    #[test]
    fn split_rejects_small_cells() {
        let logs: Vec<_> = TaskId::ALL
            .iter()
            .flat_map(|&t| {
                OperatorId::ALL
                    .iter()
                    .map(move |&o| (format!("{t}-{o}"), t, o))
            })
            .collect();
        assert!(matches!(
            SplitPlan::stratified(&logs, 1, 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn thresholds_json_round_trip() {
        let t = ThresholdVector {
            names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            theta: (0..NUM_FEATURES).map(|i| i as f64 * 0.001).collect(),
            calibration_fraction: 0.5,
        };
        assert_eq!(ThresholdVector::from_json(&t.to_json()).unwrap(), t);
        assert!(ThresholdVector::from_json("{\"fraction\": 0.5}").is_err());
    }

    fn small_corpus() -> Vec<MovementSequence> {
        let mut out = Vec::new();
        for &t in TaskId::ALL {
            for &o in OperatorId::ALL {
                for r in 0..3u64 {
                    let mut log =
                        generate_log(t, o, 4.0, 100 * r + (t.index() * 4 + o.index()) as u64)
                            .unwrap();
                    log.id = format!("{t}-{o}-{r}");
                    out.push(deltas(&log).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn prepare_calibrates_on_training_exercises_only() {
        let mv = small_corpus();
        let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        let opts = PipelineOptions {
            holdout_exercises_per_cell: 1,
            ..PipelineOptions::default()
        };
        let p = prepare(&mv, &names, &opts).unwrap();
        let test: BTreeSet<&str> = p.split.plan.test.iter().map(String::as_str).collect();
        assert_eq!(test.len(), 16);
        assert!(p
            .split
            .test
            .iter()
            .all(|w| test.contains(w.log_id.as_str())));
        assert!(p
            .split
            .train
            .iter()
            .all(|w| !test.contains(w.log_id.as_str())));
        let expected =
            calibrate_thresholds(mv.iter().filter(|m| !test.contains(m.log_id.as_str())), 0.5)
                .unwrap();
        assert_eq!(p.thresholds().unwrap().theta, expected.theta);
        assert_eq!(p.events.len(), mv.len());

        let raw = prepare(
            &mv,
            &names,
            &PipelineOptions {
                mode: InputMode::Raw,
                ..opts
            },
        )
        .unwrap();
        assert!(raw.thresholds().is_none() && raw.events.is_empty());
        assert_eq!(raw.split.train.len(), p.split.train.len());
        assert_eq!(raw.split.test.len(), p.split.test.len());
    }

    proptest! {
        #[test]
        fn threshold_monotone(
            d in proptest::collection::vec(-1.0f64..1.0, 30),
            lo in proptest::collection::vec(0.0f64..0.5, 3),
            bump in proptest::collection::vec(0.0f64..0.5, 3),
        ) {
            let m = seq(3, d);
            let hi: Vec<f64> = lo.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let s_lo = sparsity(&encode_events(&m, &thresholds(lo)).unwrap());
            let s_hi = sparsity(&encode_events(&m, &thresholds(hi)).unwrap());
            prop_assert!(s_hi <= s_lo);
        }

        #[test]
        fn re_encoding_events_is_identity(
            bits in proptest::collection::vec(0u8..2, 40),
            theta in 0.0f64..0.999,
        ) {
            let m = seq(4, bits.iter().map(|&b| f64::from(b)).collect());
            let e = encode_events(&m, &thresholds(vec![theta; 4])).unwrap();
            prop_assert_eq!(e.events, bits);
        }

        #[test]
        fn window_count_formula(steps in 1usize..400, length in 1usize..60, stride in 1usize..30) {
            prop_assume!(steps >= length);
            let m = seq(1, vec![0.0; steps]);
            let w = window_raw(&m, length, stride).unwrap();
            prop_assert_eq!(w.len(), (steps - length) / stride + 1);
            prop_assert!(w.iter().all(|w| w.start + length <= steps));
        }

        #[test]
        fn split_is_leak_free(seed in any::<u64>()) {
            let logs: Vec<_> = TaskId::ALL
                .iter()
                .flat_map(|&t| OperatorId::ALL.iter().flat_map(move |&o| {
                    (0..4).map(move |r| (format!("{t}-{o}-{r}"), t, o))
                }))
                .collect();
            let plan = SplitPlan::stratified(&logs, 2, seed).unwrap();
            prop_assert_eq!(plan.test.len(), 32);
            let train: BTreeSet<_> = plan.train.iter().collect();
            prop_assert!(plan.test.iter().all(|id| !train.contains(id)));
        }
    }
}
