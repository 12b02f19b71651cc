//! One function per subcommand. Each reads its inputs from the output
//! directory, writes its artifacts there and returns a summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use kinespike::analysis::{
    ablation_sweep, confusion, embed, spread_stats, AblationReport, AblationSetup, EmbeddingPlot,
    SpreadStats,
};
use kinespike::datagen::{generate_dataset_jobs, read_log_csv, write_log_csv, ManifestEntry};
use kinespike::encoding::{
    calibrate, deltas, events_to_csv, materialize, Calibration, DatasetSplit, EventWindow,
    InputMode, MovementSequence, PipelineOptions, RawScaler, SplitPlan, ThresholdVector,
};
use kinespike::nets::{evaluate, train_with, Evaluation, ModelFile, ModelSpec, TrainHistory};
use kinespike::spiking::{convert, evaluate_snn, load_snn, save_snn, SnnEvaluation};
use kinespike::FEATURE_NAMES;

use crate::artifacts::{model_stem, read, require, to_json, write, Layout};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    /// Worker cap for dataset generation and ablation.
    pub jobs: usize,
    pub layout: Layout,
    /// Suppresses progress lines.
    pub quiet: bool,
}

impl Context {
    pub fn new(cfg: RunConfig, jobs: usize) -> Self {
        let layout = Layout::new(cfg.output_path());
        Self {
            cfg,
            jobs: jobs.max(1),
            layout,
            quiet: false,
        }
    }

    /// One `key=value` progress line on standard error.
    pub fn progress(&self, stage: &str, fields: &[(&str, String)]) {
        if self.quiet {
            return;
        }
        let mut line = format!("progress stage={stage}");
        for (k, v) in fields {
            line.push_str(&format!(" {k}={v}"));
        }
        eprintln!("{line}");
    }

    /// Stem of the model the config describes.
    pub fn stem(&self) -> String {
        let c = &self.cfg;
        model_stem(c.model.kind, c.model.target, c.encoding.mode, c.train.seed)
    }

    pub fn default_model(&self) -> PathBuf {
        self.layout.model(&self.stem())
    }
}

fn feature_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Stem of a model or spiking-network file path.
pub fn stem_of(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for suffix in [".model.json", ".snn.json", ".json"] {
        if let Some(s) = name.strip_suffix(suffix) {
            return s.to_string();
        }
    }
    name
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenSummary {
    pub logs: usize,
    pub frames: usize,
}

/// Synthesizes the corpus: `logs/*.csv` plus `manifest.json`.
pub fn cmd_gen(ctx: &Context) -> CliResult<GenSummary> {
    let ds = generate_dataset_jobs(&ctx.cfg.dataset, ctx.jobs)?;
    let logs_dir = ctx.layout.logs_dir();
    if logs_dir.exists() {
        std::fs::remove_dir_all(&logs_dir).map_err(|e| kinespike::Error::Io {
            path: logs_dir.clone(),
            source: e,
        })?;
    }
    std::fs::create_dir_all(&logs_dir).map_err(|e| kinespike::Error::Io {
        path: logs_dir.clone(),
        source: e,
    })?;
    for (log, entry) in ds.logs.iter().zip(&ds.manifest) {
        write_log_csv(log, &ctx.layout.root().join(&entry.path))?;
    }
    write(&ctx.layout.manifest(), to_json(&ds.manifest))?;
    let frames: usize = ds.manifest.iter().map(|e| e.frames).sum();
    ctx.progress(
        "gen",
        &[
            ("logs", ds.logs.len().to_string()),
            ("frames", frames.to_string()),
        ],
    );
    Ok(GenSummary {
        logs: ds.logs.len(),
        frames,
    })
}

pub fn load_manifest(ctx: &Context) -> CliResult<Vec<ManifestEntry>> {
    let text = read(&ctx.layout.manifest(), "gen")?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Core(kinespike::Error::Format(format!("manifest: {e}"))))
}

/// Reads every manifest log and converts it to movement deltas.
pub fn load_movements(ctx: &Context) -> CliResult<Vec<MovementSequence>> {
    let manifest = load_manifest(ctx)?;
    manifest
        .iter()
        .map(|entry| {
            let path = ctx.layout.root().join(&entry.path);
            require(&path, "gen")?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let log = read_log_csv(&path, entry, &id)?;
            Ok(deltas(&log)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodeSummary {
    pub mode: InputMode,
    pub train_windows: usize,
    pub test_windows: usize,
    /// Fraction of nonzero inputs over every log (event mode).
    pub nonzero_fraction: Option<f64>,
}

/// Fits thresholds (or a scaler) on the training exercises and writes the
/// split plan, calibration and, in event mode, per-log event CSVs.
pub fn cmd_encode(ctx: &Context) -> CliResult<EncodeSummary> {
    let movements = load_movements(ctx)?;
    let opts = &ctx.cfg.encoding;
    let (plan, calibration) = calibrate(&movements, &feature_names(), opts)?;
    let (split, events) = materialize(&movements, &plan, &calibration, opts)?;
    write(&ctx.layout.split(), to_json(&plan))?;
    let mut nonzero = None;
    match &calibration {
        Calibration::Thresholds(theta) => {
            write(&ctx.layout.thresholds(), theta.to_json() + "\n")?;
            let dir = ctx.layout.events_dir();
            let (mut ones, mut total) = (0usize, 0usize);
            for ev in &events {
                write(
                    &dir.join(format!("{}.csv", ev.log_id)),
                    events_to_csv(ev, &feature_names()),
                )?;
                ones += ev.events.iter().filter(|&&e| e != 0).count();
                total += ev.events.len();
            }
            nonzero = Some(ones as f64 / total.max(1) as f64);
        }
        Calibration::Scaler(sc) => write(&ctx.layout.scaler(), to_json(sc))?,
    }
    ctx.progress(
        "encode",
        &[
            ("mode", opts.mode.to_string()),
            ("train_windows", split.train.len().to_string()),
            ("test_windows", split.test.len().to_string()),
        ],
    );
    Ok(EncodeSummary {
        mode: opts.mode,
        train_windows: split.train.len(),
        test_windows: split.test.len(),
        nonzero_fraction: nonzero,
    })
}

fn format_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Core(kinespike::Error::Format(format!("{}: {e}", path.display())))
}

/// Rebuilds the train/test windows from the encode artifacts.
pub fn load_split(ctx: &Context, opts: &PipelineOptions) -> CliResult<DatasetSplit> {
    let movements = load_movements(ctx)?;
    let split_path = ctx.layout.split();
    let plan: SplitPlan = serde_json::from_str(&read(&split_path, "encode")?)
        .map_err(|e| format_error(&split_path, e))?;
    if plan.holdout_exercises_per_cell != opts.holdout_exercises_per_cell
        || plan.seed != opts.split_seed
    {
        return Err(CliError::Stale {
            artifact: split_path,
            command: "encode",
            reason: "split settings differ from the config".into(),
        });
    }
    let calibration = match opts.mode {
        InputMode::Event => {
            let path = ctx.layout.thresholds();
            let theta = ThresholdVector::from_json(&read(&path, "encode")?)?;
            if theta.calibration_fraction != opts.fraction {
                return Err(CliError::Stale {
                    artifact: path,
                    command: "encode",
                    reason: format!(
                        "thresholds use fraction {}, config asks for {}",
                        theta.calibration_fraction, opts.fraction
                    ),
                });
            }
            Calibration::Thresholds(theta)
        }
        InputMode::Raw => {
            let path = ctx.layout.scaler();
            let sc: RawScaler = serde_json::from_str(&read(&path, "encode --encoding.mode raw")?)
                .map_err(|e| format_error(&path, e))?;
            Calibration::Scaler(sc)
        }
    };
    Ok(materialize(&movements, &plan, &calibration, opts)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub model: PathBuf,
    pub best_epoch: usize,
    pub best_test_accuracy: f64,
    pub epochs: usize,
}

/// Encoding settings recorded with a model, falling back to the config.
fn model_encoding(ctx: &Context, file: &ModelFile) -> PipelineOptions {
    file.extra
        .as_ref()
        .and_then(|e| e.get("encoding"))
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_else(|| ctx.cfg.encoding.clone())
}

/// Trains the configured model; writes the best checkpoint and `history.csv`.
pub fn cmd_train(ctx: &Context) -> CliResult<TrainSummary> {
    let spec = ctx.cfg.model_spec();
    train_model(ctx, &spec, &ctx.cfg.encoding, ctx.cfg.train.seed)
}

/// Trains `spec` on windows built with `opts` using the config's optimizer
/// settings and `seed`.
pub fn train_model(
    ctx: &Context,
    spec: &ModelSpec,
    opts: &PipelineOptions,
    seed: u64,
) -> CliResult<TrainSummary> {
    let split = load_split(ctx, opts)?;
    let cfg = kinespike::nets::TrainConfig {
        seed,
        ..ctx.cfg.train.clone()
    };
    let stem = model_stem(spec.kind, spec.target, opts.mode, seed);
    let (params, history) = train_with(spec, &split, &cfg, |epoch, h: &TrainHistory| {
        ctx.progress(
            "train",
            &[
                ("model", stem.clone()),
                ("epoch", epoch.to_string()),
                ("loss", format!("{:.4}", h.train_loss[epoch - 1])),
                ("train_acc", format!("{:.4}", h.train_accuracy[epoch - 1])),
                ("test_acc", format!("{:.4}", h.test_accuracy[epoch - 1])),
            ],
        )
    })?;
    let (best_epoch, best) = history.best().expect("at least one epoch");
    let mut file = ModelFile::new(spec, &params);
    file.training_config = Some(cfg);
    file.metrics = BTreeMap::from([
        ("best_epoch".to_string(), (best_epoch + 1) as f64),
        ("test_accuracy".to_string(), best),
        ("train_windows".to_string(), split.train.len() as f64),
        ("test_windows".to_string(), split.test.len() as f64),
    ]);
    file.extra = Some(json!({ "encoding": opts }));
    let path = ctx.layout.model(&stem);
    write(&path, file.to_json() + "\n")?;
    write(&ctx.layout.history(&stem), history.to_csv())?;
    Ok(TrainSummary {
        model: path,
        best_epoch: best_epoch + 1,
        best_test_accuracy: best,
        epochs: history.epochs(),
    })
}

fn load_model_file(path: &Path) -> CliResult<ModelFile> {
    require(path, "train")?;
    Ok(ModelFile::load(path)?)
}

/// Converts a trained model with the config's simulation settings.
pub fn cmd_convert(ctx: &Context, model: Option<&Path>) -> CliResult<PathBuf> {
    let path = model.map_or_else(|| ctx.default_model(), Path::to_path_buf);
    let file = load_model_file(&path)?;
    let snn = convert(&file.spec, &file.params()?, ctx.cfg.sim_config())?;
    let out = ctx.layout.snn(&stem_of(&path));
    std::fs::create_dir_all(ctx.layout.models_dir()).map_err(|e| kinespike::Error::Io {
        path: ctx.layout.models_dir(),
        source: e,
    })?;
    save_snn(&snn, file, &out)?;
    ctx.progress(
        "convert",
        &[
            ("model", stem_of(&path)),
            ("layers", snn.layers.len().to_string()),
            (
                "hybrid",
                matches!(snn.front, kinespike::spiking::Front::Recurrent { .. }).to_string(),
            ),
        ],
    );
    Ok(out)
}

/// Which network `eval` scores.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSubject {
    Model(PathBuf),
    Snn(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub network: String,
    pub kind: String,
    pub target: String,
    pub mode: InputMode,
    pub windows: usize,
    pub accuracy: f64,
    pub exercise_accuracy: f64,
    pub class_names: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spiking: Option<serde_json::Value>,
}

/// Scores a model or spiking network on the test windows; writes the
/// report JSON and confusion CSV/SVG. `trace` also exports a spike trace of
/// the first test window (spiking networks only).
pub fn cmd_eval(ctx: &Context, subject: &EvalSubject, trace: bool) -> CliResult<EvalReport> {
    Ok(eval_detailed(ctx, subject, trace)?.0)
}

/// [`cmd_eval`] that also returns the per-window predictions.
pub fn eval_detailed(
    ctx: &Context,
    subject: &EvalSubject,
    trace: bool,
) -> CliResult<(EvalReport, Evaluation)> {
    let (path, network) = match subject {
        EvalSubject::Model(p) => (p.clone(), "ann"),
        EvalSubject::Snn(p) => (p.clone(), "snn"),
    };
    let producer = if network == "snn" { "convert" } else { "train" };
    require(&path, producer)?;
    let stem = stem_of(&path);
    let (file, spiking, evaluation): (ModelFile, Option<serde_json::Value>, Evaluation) =
        match subject {
            EvalSubject::Model(_) => {
                let file = ModelFile::load(&path)?;
                let opts = model_encoding(ctx, &file);
                let split = load_split(ctx, &opts)?;
                let ev = evaluate(&file.spec, &file.params()?, &split.test)?;
                (file, None, ev)
            }
            EvalSubject::Snn(_) => {
                let (file, snn) = load_snn(&path)?;
                let opts = model_encoding(ctx, &file);
                let split = load_split(ctx, &opts)?;
                let SnnEvaluation {
                    evaluation,
                    mean_synaptic_events,
                    mean_spikes,
                } = evaluate_snn(&snn, &split.test)?;
                if trace {
                    let (_, t) = snn.simulate_traced(&split.test[0])?;
                    write(
                        &ctx.layout.report(&format!("{stem}.snn"), "trace.csv"),
                        t.to_csv(),
                    )?;
                }
                let info = json!({
                    "neuron": snn.config.neuron,
                    "dt": snn.config.dt,
                    "steps": snn.config.steps,
                    "input_gain": snn.config.input_gain,
                    "hybrid": matches!(snn.front, kinespike::spiking::Front::Recurrent { .. }),
                    "mean_synaptic_events": mean_synaptic_events,
                    "mean_spikes": mean_spikes,
                });
                (file, Some(info), evaluation)
            }
        };
    let class_names = file.spec.target.class_names();
    let cm = confusion(&evaluation.predictions, &evaluation.labels, &class_names)?;
    let name = if network == "snn" {
        format!("{stem}.snn")
    } else {
        stem.clone()
    };
    let report = EvalReport {
        model: stem,
        network: network.to_string(),
        kind: file.spec.kind.to_string(),
        target: file.spec.target.to_string(),
        mode: model_encoding(ctx, &file).mode,
        windows: evaluation.labels.len(),
        accuracy: evaluation.accuracy,
        exercise_accuracy: evaluation.exercise_accuracy,
        class_names,
        confusion: cm.counts.clone(),
        spiking,
    };
    write(&ctx.layout.report(&name, "report.json"), to_json(&report))?;
    write(&ctx.layout.report(&name, "confusion.csv"), cm.to_csv())?;
    let title = format!(
        "{} {} ({network}) accuracy {:.2}%",
        report.kind,
        report.target,
        100.0 * report.accuracy
    );
    write(
        &ctx.layout.report(&name, "confusion.svg"),
        cm.to_svg(&title),
    )?;
    ctx.progress(
        "eval",
        &[
            ("model", name),
            ("accuracy", format!("{:.4}", report.accuracy)),
        ],
    );
    Ok((report, evaluation))
}

/// Leave-one-feature-out sweep with the analysis section's model kind and seeds.
pub fn cmd_ablate(ctx: &Context) -> CliResult<AblationReport> {
    let movements = load_movements(ctx)?;
    let cfg = &ctx.cfg;
    let setup = AblationSetup {
        spec: cfg.spec_for(cfg.analysis.ablation_kind, cfg.model.target),
        train: cfg.train.clone(),
        pipeline: cfg.encoding.clone(),
        seeds: cfg.analysis.ablation_seeds.0.clone(),
    };
    let report = ablation_sweep(&movements, &setup, ctx.jobs, |row| {
        ctx.progress(
            "ablate",
            &[
                ("feature", format!("\"{}\"", row.feature)),
                ("delta", format!("{:.4}", row.delta())),
            ],
        )
    })?;
    let name = ablation_name(ctx);
    write(&ctx.layout.report(&name, "csv"), report.to_csv())?;
    write(&ctx.layout.report(&name, "svg"), report.to_svg())?;
    write(&ctx.layout.report(&name, "json"), to_json(&report))?;
    Ok(report)
}

pub fn ablation_name(ctx: &Context) -> String {
    let c = &ctx.cfg;
    format!(
        "ablation-{}-{}-{}",
        c.analysis.ablation_kind, c.model.target, c.encoding.mode
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedSummary {
    pub points: usize,
    pub kl_initial: f64,
    pub kl_final: f64,
    /// Worst |H(P_i) - ln(perplexity)| over the calibrated points.
    pub max_entropy_error: f64,
    pub spread: SpreadStats,
    pub separation_ratio: f64,
}

/// t-SNE of a model's penultimate activations over the test windows (and
/// the training windows when `analysis.embed_train` is set).
pub fn cmd_embed(ctx: &Context, model: Option<&Path>) -> CliResult<(EmbeddingPlot, EmbedSummary)> {
    let path = model.map_or_else(|| ctx.default_model(), Path::to_path_buf);
    let file = load_model_file(&path)?;
    let opts = model_encoding(ctx, &file);
    let split = load_split(ctx, &opts)?;
    let mut windows: Vec<EventWindow> = split.test;
    if ctx.cfg.analysis.embed_train {
        windows.extend(split.train);
    }
    let plot = embed(
        &file.spec,
        &file.params()?,
        &windows,
        &ctx.cfg.tsne_config(),
    )?;
    let spread = spread_stats(&plot)?;
    let summary = EmbedSummary {
        points: plot.points.len(),
        kl_initial: plot.kl_initial,
        kl_final: plot.kl_final,
        max_entropy_error: plot.max_entropy_error,
        separation_ratio: spread.separation_ratio(),
        spread,
    };
    let name = format!("embedding-{}", stem_of(&path));
    write(&ctx.layout.report(&name, "csv"), plot.to_csv())?;
    let title = format!(
        "{} {} penultimate embedding (t-SNE)",
        file.spec.kind, file.spec.target
    );
    write(&ctx.layout.report(&name, "svg"), plot.to_svg(&title))?;
    write(&ctx.layout.report(&name, "json"), to_json(&summary))?;
    ctx.progress(
        "embed",
        &[
            ("points", summary.points.to_string()),
            ("kl", format!("{:.4}", summary.kl_final)),
            ("separation", format!("{:.3}", summary.separation_ratio)),
        ],
    );
    Ok((plot, summary))
}
