//! Seeded synthetic kinematic logs.
//!
//! Each instrument follows a scripted cycle of waypoints, interpolated
//! piecewise-linearly at a speed set by the operator, with random pauses at
//! waypoints. Operator tremor (a sinusoid plus Gaussian jitter) is added on top
//! and the result is moving-average smoothed. The camera stays still unless
//! camera motion is enabled for both the dataset and the task.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::schema::{
    OperatorId, TaskId, ToolColumns, CAMERA, FEATURE_NAMES, LEFT_TOOL, NUM_FEATURES, RIGHT_TOOL,
    SAMPLE_RATE_HZ,
};

/// `[X, Y, Z, Pitch, Roll, Yaw, Jaw]` target for one instrument.
pub type Pose = [f64; 7];

/// Base translation speed in units per frame at speed multiplier 1.
const TRANSLATION_SPEED: f64 = 0.12;
/// Base rotation speed in radians per frame.
const ROTATION_SPEED: f64 = 0.0098;
const JAW_SPEED: f64 = 0.03;
/// Script coordinates to simulator units.
const SPATIAL_SCALE: f64 = 2.0;
/// Script rotation excursions to radians (before task intensity).
const ROTATION_GAIN: f64 = 0.7;
/// Per-visit spread added to translation targets.
const WAYPOINT_SPREAD: f64 = 0.06;
/// Tremor and jitter scale on rotation and jaw channels relative to translation.
const ROTATION_TREMOR_SCALE: f64 = 0.03;
const JAW_TREMOR_SCALE: f64 = 0.1;
/// Jitter standard deviation relative to tremor amplitude.
const JITTER_RATIO: f64 = 0.4;
const PAUSE_FRAMES: (usize, usize) = (8, 40);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorStyle {
    pub speed_multiplier: f64,
    pub tremor_amplitude: f64,
    pub tremor_frequency_hz: f64,
    /// Chance of pausing at each waypoint.
    pub pause_probability: f64,
    pub smoothing_window: usize,
}

impl OperatorStyle {
    /// Built-in preset. A has the smallest tremor.
    pub fn preset(op: OperatorId) -> Self {
        let (speed, amp, freq, pause, smooth) = match op {
            OperatorId::A => (1.0, 0.0015, 9.0, 0.10, 3),
            OperatorId::B => (1.4, 0.0035, 4.5, 0.35, 2),
            OperatorId::C => (0.7, 0.0055, 2.5, 0.05, 4),
            OperatorId::D => (1.15, 0.0080, 6.5, 0.20, 1),
        };
        Self {
            speed_multiplier: speed,
            tremor_amplitude: amp,
            tremor_frequency_hz: freq,
            pause_probability: pause,
            smoothing_window: smooth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.speed_multiplier > 0.0
            && self.tremor_amplitude >= 0.0
            && self.tremor_frequency_hz > 0.0
            && (0.0..=1.0).contains(&self.pause_probability)
            && self.smoothing_window >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Schema(format!("invalid operator style {self:?}")))
        }
    }
}

/// Waypoint cycle for both instruments. Rotation entries of each waypoint are
/// unit excursions, scaled by `rotation_intensity` when the log is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScript {
    pub left: Vec<Pose>,
    pub right: Vec<Pose>,
    pub rotation_intensity: f64,
    pub camera_motion: bool,
}

impl TaskScript {
    pub fn for_task(task: TaskId) -> Self {
        match task {
            TaskId::PickAndPlace => TaskScript {
                left: vec![
                    [-0.6, -0.2, 0.5, 0.0, 0.0, 0.0, 0.5],
                    [-0.6, -0.2, 0.1, 0.0, 0.0, 0.0, 0.5],
                    [-0.6, -0.2, 0.1, 0.0, 0.0, 0.0, 0.2],
                    [-0.6, -0.2, 0.5, 0.0, 0.0, 0.0, 0.2],
                    [-0.2, 0.3, 0.5, 0.0, 0.0, 0.0, 0.2],
                    [-0.2, 0.3, 0.1, 0.0, 0.0, 0.0, 0.2],
                    [-0.2, 0.3, 0.1, 0.0, 0.0, 0.0, 0.5],
                    [-0.2, 0.3, 0.5, 0.0, 0.0, 0.0, 0.5],
                ],
                right: vec![
                    [0.6, 0.3, 0.5, 0.0, 0.0, 0.0, 0.33],
                    [0.6, 0.3, 0.1, 0.0, 0.0, 0.0, 0.33],
                    [0.6, 0.3, 0.1, 0.0, 0.0, 0.0, 0.2],
                    [0.6, 0.3, 0.5, 0.0, 0.0, 0.0, 0.2],
                    [0.2, -0.3, 0.5, 0.0, 0.0, 0.0, 0.2],
                    [0.2, -0.3, 0.1, 0.0, 0.0, 0.0, 0.2],
                    [0.2, -0.3, 0.1, 0.0, 0.0, 0.0, 0.33],
                    [0.2, -0.3, 0.5, 0.0, 0.0, 0.0, 0.33],
                ],
                rotation_intensity: 0.0,
                camera_motion: false,
            },
            TaskId::PegBoard => TaskScript {
                left: vec![
                    [-0.3, 0.0, 0.6, 0.0, 0.0, 0.0, 0.5],
                    [0.0, 0.0, 0.4, 0.0, -0.6, 0.0, 0.5],
                    [0.0, 0.0, 0.4, 0.0, -0.6, 0.0, 0.2],
                    [-0.3, 0.1, 0.6, 0.5, 0.0, 0.0, 0.2],
                    [-0.3, 0.1, 0.05, 0.5, 0.0, 0.0, 0.2],
                    [-0.3, 0.1, 0.05, 0.5, 0.0, 0.0, 0.5],
                ],
                right: vec![
                    [0.3, 0.0, 0.6, 0.5, 0.0, 0.0, 0.33],
                    [0.3, 0.0, 0.05, 0.5, 0.0, 0.0, 0.33],
                    [0.3, 0.0, 0.05, 0.5, 0.0, 0.0, 0.2],
                    [0.3, 0.0, 0.6, -0.5, 0.0, 0.0, 0.2],
                    [0.0, 0.0, 0.4, 0.0, 0.6, 0.0, 0.2],
                    [0.0, 0.0, 0.4, 0.0, 0.6, 0.0, 0.33],
                ],
                rotation_intensity: 0.4,
                camera_motion: false,
            },
            TaskId::ThreadTheRings => TaskScript {
                left: vec![
                    [-0.5, 0.0, 0.3, 0.0, 0.0, 0.0, 0.2],
                    [-0.5, 0.0, 0.3, 0.8, 0.6, 0.1, 0.2],
                    [-0.1, 0.3, 0.5, 0.8, 0.6, 0.1, 0.2],
                    [-0.1, 0.3, 0.5, -0.4, -0.5, 0.0, 0.2],
                    [-0.5, -0.2, 0.2, 0.0, 0.0, 0.0, 0.5],
                ],
                right: vec![
                    [0.6, -0.3, 0.3, 0.0, 0.0, 0.0, 0.33],
                    [0.2, 0.3, 0.5, 0.2, 0.1, 0.0, 0.33],
                    [0.2, 0.3, 0.5, 0.2, 0.1, 0.0, 0.2],
                    [0.7, -0.1, 0.1, -0.2, 0.2, 0.1, 0.2],
                    [0.6, -0.3, 0.3, 0.0, 0.0, 0.0, 0.33],
                ],
                rotation_intensity: 1.5,
                camera_motion: true,
            },
            TaskId::RingAndRail => TaskScript {
                left: vec![
                    [-0.9, -0.4, 0.2, 0.0, 0.0, 0.0, 0.5],
                    [-0.9, -0.4, 0.2, 0.0, 0.0, 0.0, 0.2],
                    [-0.5, 0.0, 0.5, 0.0, -0.5, -0.7, 0.2],
                    [-0.1, 0.3, 0.2, 0.1, 0.3, -0.9, 0.2],
                    [-0.1, 0.3, 0.2, 0.0, 0.0, -0.9, 0.5],
                ],
                right: vec![
                    [0.1, 0.4, 0.2, 0.0, 0.0, 0.0, 0.33],
                    [0.1, 0.4, 0.2, 0.0, 0.0, 0.0, 0.2],
                    [0.5, 0.0, 0.5, 0.0, 0.5, 0.7, 0.2],
                    [0.9, -0.3, 0.2, 0.1, -0.3, 0.9, 0.2],
                    [0.9, -0.3, 0.2, 0.0, 0.0, 0.9, 0.33],
                    [0.1, 0.4, 0.2, 0.0, 0.0, 0.0, 0.33],
                ],
                rotation_intensity: 1.2,
                camera_motion: true,
            },
        }
    }
}

/// One recorded exercise: `frames[t][f]` is feature `f` at frame `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicLog {
    pub id: String,
    pub task: TaskId,
    pub operator: OperatorId,
    pub sample_rate_hz: f64,
    pub seed: u64,
    pub frames: Vec<[f64; NUM_FEATURES]>,
}

impl KinematicLog {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn column(&self, f: usize) -> Vec<f64> {
        self.frames.iter().map(|r| r[f]).collect()
    }
}

/// Knobs shared by every log of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    pub camera_motion: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            camera_motion: false,
        }
    }
}

/// Synthesizes one log with the default options.
pub fn generate_log(
    task: TaskId,
    operator: OperatorId,
    duration_s: f64,
    seed: u64,
) -> Result<KinematicLog> {
    generate_log_with(task, operator, duration_s, seed, &GenOptions::default())
}

pub fn generate_log_with(
    task: TaskId,
    operator: OperatorId,
    duration_s: f64,
    seed: u64,
    opts: &GenOptions,
) -> Result<KinematicLog> {
    if !(duration_s >= 2.0) || !duration_s.is_finite() {
        return Err(Error::Input(format!(
            "duration must be at least 2 s, got {duration_s}"
        )));
    }
    let style = OperatorStyle::preset(operator);
    style.validate()?;
    let script = TaskScript::for_task(task);
    let n = (duration_s * SAMPLE_RATE_HZ).round() as usize;
    let rng = Rng::new(seed);

    let mut frames = vec![[0.0; NUM_FEATURES]; n];
    for (side, tool, cycle) in [
        ("left", LEFT_TOOL, &script.left),
        ("right", RIGHT_TOOL, &script.right),
    ] {
        let mut stream = rng.stream(side);
        let path = trace_waypoints(cycle, script.rotation_intensity, &style, n, &mut stream);
        write_tool(&mut frames, tool, &path, &style, &mut stream);
    }
    if opts.camera_motion && script.camera_motion {
        let mut stream = rng.stream("camera");
        let path = trace_camera(n, &mut stream);
        write_tool(&mut frames, CAMERA, &path, &style, &mut stream);
    }
    smooth(&mut frames, style.smoothing_window);

    Ok(KinematicLog {
        id: format!("{task}-{operator}-{seed:016x}"),
        task,
        operator,
        sample_rate_hz: SAMPLE_RATE_HZ,
        seed,
        frames,
    })
}

/// Piecewise-linear path through the (perturbed, cyclic) waypoint list.
fn trace_waypoints(
    cycle: &[Pose],
    rotation_intensity: f64,
    style: &OperatorStyle,
    n: usize,
    rng: &mut Rng,
) -> Vec<Pose> {
    let visit = |k: usize, rng: &mut Rng| -> Pose {
        let base = cycle[k % cycle.len()];
        let mut p = base;
        for v in p.iter_mut().take(3) {
            *v = SPATIAL_SCALE * (*v + rng.uniform(-WAYPOINT_SPREAD, WAYPOINT_SPREAD));
        }
        for v in p.iter_mut().skip(3).take(3) {
            *v = ROTATION_GAIN * rotation_intensity * (*v + rng.uniform(-0.15, 0.15));
        }
        p
    };

    let mut k = rng.below(cycle.len());
    let mut current = visit(k, rng);
    let mut path = Vec::with_capacity(n);
    path.push(current);
    while path.len() < n {
        if rng.bernoulli(style.pause_probability) {
            let hold = PAUSE_FRAMES.0 + rng.below(PAUSE_FRAMES.1 - PAUSE_FRAMES.0 + 1);
            for _ in 0..hold {
                path.push(current);
            }
        }
        k += 1;
        let next = visit(k, rng);
        let trans = dist(&current[..3], &next[..3]) / TRANSLATION_SPEED;
        let rot = dist(&current[3..6], &next[3..6]) / ROTATION_SPEED;
        let jaw = (current[6] - next[6]).abs() / JAW_SPEED;
        let steps = ((trans.max(rot).max(jaw) / style.speed_multiplier).ceil() as usize).max(3);
        for s in 1..=steps {
            let a = s as f64 / steps as f64;
            let mut p = [0.0; 7];
            for c in 0..7 {
                p[c] = current[c] + a * (next[c] - current[c]);
            }
            path.push(p);
        }
        current = next;
    }
    path.truncate(n);
    path
}

/// Slow camera pans between random framing targets.
fn trace_camera(n: usize, rng: &mut Rng) -> Vec<Pose> {
    let mut path = Vec::with_capacity(n);
    let mut current = [0.0; 7];
    while path.len() < n {
        let hold = 60 + rng.below(120);
        path.extend(std::iter::repeat(current).take(hold));
        let mut next = current;
        for v in next.iter_mut().take(3) {
            *v = rng.uniform(-0.2, 0.2);
        }
        for v in next.iter_mut().skip(3).take(3) {
            *v = rng.uniform(-0.1, 0.1);
        }
        let steps = 20 + rng.below(40);
        for s in 1..=steps {
            let a = s as f64 / steps as f64;
            let mut p = [0.0; 7];
            for c in 0..6 {
                p[c] = current[c] + a * (next[c] - current[c]);
            }
            path.push(p);
        }
        current = next;
    }
    path.truncate(n);
    path
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Writes a tool path into its feature columns with tremor and jitter added.
fn write_tool(
    frames: &mut [[f64; NUM_FEATURES]],
    tool: ToolColumns,
    path: &[Pose],
    style: &OperatorStyle,
    rng: &mut Rng,
) {
    let omega = std::f64::consts::TAU * style.tremor_frequency_hz / SAMPLE_RATE_HZ;
    let mut columns: Vec<(usize, usize, f64)> = Vec::with_capacity(7);
    for (c, &f) in tool.xyz.iter().enumerate() {
        columns.push((c, f, 1.0));
    }
    for (c, &f) in tool.rotation.iter().enumerate() {
        columns.push((3 + c, f, ROTATION_TREMOR_SCALE));
    }
    if let Some(f) = tool.jaw {
        columns.push((6, f, JAW_TREMOR_SCALE));
    }
    for (c, f, scale) in columns {
        let amp = style.tremor_amplitude * scale;
        let phase = rng.uniform(0.0, std::f64::consts::TAU);
        for (t, row) in frames.iter_mut().enumerate() {
            let tremor = amp * (omega * t as f64 + phase).sin();
            let jitter = JITTER_RATIO * amp * rng.normal();
            row[f] = path[t][c] + tremor + jitter;
        }
    }
}

/// Centered moving average, truncated at the edges. Columns that are all zero stay zero.
fn smooth(frames: &mut [[f64; NUM_FEATURES]], window: usize) {
    if window <= 1 || frames.is_empty() {
        return;
    }
    let n = frames.len();
    let back = (window - 1) / 2;
    let fwd = window - 1 - back;
    for f in 0..NUM_FEATURES {
        let col: Vec<f64> = frames.iter().map(|r| r[f]).collect();
        if col.iter().all(|&v| v == 0.0) {
            continue;
        }
        for t in 0..n {
            let lo = t.saturating_sub(back);
            let hi = (t + fwd).min(n - 1);
            let sum: f64 = col[lo..=hi].iter().sum();
            frames[t][f] = sum / (hi - lo + 1) as f64;
        }
    }
}

/// Dataset size and seeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub reps_per_cell: usize,
    pub base_seed: u64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub camera_motion: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            reps_per_cell: 8,
            base_seed: 42,
            min_duration_s: 30.0,
            max_duration_s: 180.0,
            camera_motion: false,
        }
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub task: TaskId,
    pub operator: OperatorId,
    pub seed: u64,
    pub frames: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub logs: Vec<KinematicLog>,
    pub manifest: Vec<ManifestEntry>,
}

/// `reps_per_cell` logs for every (task, operator) cell with default durations.
pub fn generate_dataset(reps_per_cell: usize, base_seed: u64) -> Result<Dataset> {
    generate_dataset_with(&DatasetConfig {
        reps_per_cell,
        base_seed,
        ..DatasetConfig::default()
    })
}

pub fn generate_dataset_with(cfg: &DatasetConfig) -> Result<Dataset> {
    generate_dataset_jobs(cfg, 1)
}

/// As [`generate_dataset_with`], synthesizing up to `jobs` logs concurrently.
/// The result does not depend on `jobs`.
pub fn generate_dataset_jobs(cfg: &DatasetConfig, jobs: usize) -> Result<Dataset> {
    if cfg.reps_per_cell < 2 {
        return Err(Error::Input(format!(
            "reps_per_cell must be at least 2, got {}",
            cfg.reps_per_cell
        )));
    }
    if !(cfg.min_duration_s >= 2.0 && cfg.max_duration_s >= cfg.min_duration_s) {
        return Err(Error::Input(format!(
            "invalid duration range [{}, {}]",
            cfg.min_duration_s, cfg.max_duration_s
        )));
    }
    let root = Rng::new(cfg.base_seed);
    let opts = GenOptions {
        camera_motion: cfg.camera_motion,
    };
    let mut cells = Vec::new();
    for &task in TaskId::ALL {
        for &op in OperatorId::ALL {
            for rep in 0..cfg.reps_per_cell {
                cells.push((task, op, rep));
            }
        }
    }
    let make =
        |&(task, op, rep): &(TaskId, OperatorId, usize)| -> Result<(KinematicLog, ManifestEntry)> {
            let label = format!("{task}/{op}/{rep}");
            let seed = Rng::derive_seed(cfg.base_seed, &label);
            let duration = root
                .stream(&format!("duration/{label}"))
                .uniform(cfg.min_duration_s, cfg.max_duration_s);
            let mut log = generate_log_with(task, op, duration, seed, &opts)?;
            log.id = format!("{task}-{op}-{rep:02}");
            let entry = ManifestEntry {
                path: format!("logs/{}.csv", log.id),
                task,
                operator: op,
                seed,
                frames: log.len(),
            };
            Ok((log, entry))
        };
    let jobs = jobs.clamp(1, cells.len());
    let chunk = cells.len().div_ceil(jobs);
    let results: Vec<Result<(KinematicLog, ManifestEntry)>> = if jobs == 1 {
        cells.iter().map(make).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cells
                .chunks(chunk)
                .map(|part| scope.spawn(|| part.iter().map(make).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("generator thread panicked"))
                .collect()
        })
    };
    let mut logs = Vec::with_capacity(results.len());
    let mut manifest = Vec::with_capacity(results.len());
    for r in results {
        let (log, entry) = r?;
        logs.push(log);
        manifest.push(entry);
    }
    Ok(Dataset { logs, manifest })
}

/// Formats rows of values as CSV under the feature header.
pub(crate) fn write_feature_csv<W: Write>(
    out: &mut W,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> std::io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_log_csv(log: &KinematicLog, path: &Path) -> Result<()> {
    let header: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let mut buf = Vec::new();
    write_feature_csv(
        &mut buf,
        &header,
        log.frames
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect()),
    )
    .map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a log CSV written by [`write_log_csv`]; labels come from the manifest entry.
pub fn read_log_csv(path: &Path, entry: &ManifestEntry, id: &str) -> Result<KinematicLog> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if header.iter().ne(FEATURE_NAMES.iter().copied()) {
        return Err(Error::Schema(format!(
            "{}: header does not match the feature schema",
            path.display()
        )));
    }
    let mut frames = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let mut row = [0.0; NUM_FEATURES];
        for (f, v) in rec.iter().enumerate() {
            row[f] = v
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        }
        frames.push(row);
    }
    Ok(KinematicLog {
        id: id.to_string(),
        task: entry.task,
        operator: entry.operator,
        sample_rate_hz: SAMPLE_RATE_HZ,
        seed: entry.seed,
        frames,
    })
}
