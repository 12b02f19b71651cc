//! Run configuration: a flat `key = value` file with `[section]` headers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kinespike::analysis::{TsneConfig, TsneInit};
use kinespike::datagen::DatasetConfig;
use kinespike::encoding::{InputMode, PipelineOptions};
use kinespike::nets::{ModelKind, ModelSpec, TrainConfig};
use kinespike::spiking::{NeuronKind, NeuronModel, SimConfig};
use kinespike::Target;

use crate::error::CliError;

/// Environment variable that replaces `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "KINESPIKE_OUTPUT_DIR";

/// Comma-separated list of seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl fmt::Display for SeedList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let seeds = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u64>()
                    .map_err(|e| format!("seed `{p}`: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if seeds.is_empty() {
            return Err("empty seed list".into());
        }
        Ok(SeedList(seeds))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub target: Target,
    pub dropout_rate: f64,
    pub batchnorm: bool,
    pub kernel_width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnSection {
    pub neuron: NeuronKind,
    pub amplitude: f64,
    pub tau_rc: f64,
    pub tau_ref: f64,
    pub steps: usize,
    pub dt: f64,
    pub input_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSection {
    pub perplexity: f64,
    pub tsne_iterations: usize,
    pub tsne_seed: u64,
    pub tsne_init: TsneInit,
    pub tsne_max_points: usize,
    /// Embed training windows as well as test windows.
    pub embed_train: bool,
    pub ablation_kind: ModelKind,
    pub ablation_seeds: SeedList,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproSection {
    /// Training seeds for the event-versus-raw and camera-ablation comparisons.
    pub seeds: SeedList,
    /// Windows used for the conversion-fidelity check.
    pub fidelity_windows: usize,
    /// Coordinates sampled per parameter tensor in the recurrent gradient check.
    pub gradcheck_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub encoding: PipelineOptions,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub snn: SnnSection,
    pub analysis: AnalysisSection,
    pub repro: ReproSection,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let neuron = NeuronModel::default();
        let tsne = TsneConfig::default();
        let sim = SimConfig::default();
        Self {
            dataset: DatasetConfig::default(),
            encoding: PipelineOptions::default(),
            model: ModelSection {
                kind: ModelKind::Lstm,
                target: Target::Task,
                dropout_rate: 0.2,
                batchnorm: true,
                kernel_width: 3,
            },
            train: TrainConfig {
                max_epochs: 10,
                patience: 10,
                batches_per_epoch: 150,
                ..TrainConfig::default()
            },
            snn: SnnSection {
                neuron: neuron.kind,
                amplitude: neuron.amplitude,
                tau_rc: neuron.tau_rc,
                tau_ref: neuron.tau_ref,
                steps: sim.steps,
                dt: sim.dt,
                input_gain: sim.input_gain,
            },
            analysis: AnalysisSection {
                perplexity: tsne.perplexity,
                tsne_iterations: tsne.iterations,
                tsne_seed: tsne.seed,
                tsne_init: tsne.init,
                tsne_max_points: tsne.max_points,
                embed_train: false,
                ablation_kind: ModelKind::Fcn,
                ablation_seeds: SeedList(vec![42, 43, 44]),
            },
            repro: ReproSection {
                seeds: SeedList(vec![42, 43, 44]),
                fidelity_windows: 100,
                gradcheck_samples: 600,
            },
            output_dir: "out".into(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

macro_rules! config_keys {
    ($($section:literal . $key:literal => $($field:ident).+;)*) => {
        /// Every `(section, key)` pair in file order.
        pub const KEYS: &[(&str, &str)] = &[$(($section, $key)),*];

        impl RunConfig {
            /// Value of `section.key` as written in a config file.
            pub fn get(&self, dotted: &str) -> Option<String> {
                match dotted {
                    $(concat!($section, ".", $key) => Some(self.$($field).+.to_string()),)*
                    _ => None,
                }
            }

            /// Parses and assigns `section.key`.
            pub fn set(&mut self, dotted: &str, value: &str) -> Result<(), CliError> {
                match dotted {
                    $(concat!($section, ".", $key) => self.$($field).+ = parse(dotted, value)?,)*
                    _ => return Err(CliError::Config(format!("unknown config key `{dotted}`"))),
                }
                Ok(())
            }
        }
    };
}

config_keys! {
    "dataset"."reps_per_cell" => dataset.reps_per_cell;
    "dataset"."seed" => dataset.base_seed;
    "dataset"."min_duration_s" => dataset.min_duration_s;
    "dataset"."max_duration_s" => dataset.max_duration_s;
    "dataset"."camera_motion" => dataset.camera_motion;
    "encoding"."mode" => encoding.mode;
    "encoding"."fraction" => encoding.fraction;
    "encoding"."window_length" => encoding.window_length;
    "encoding"."stride" => encoding.stride;
    "encoding"."holdout_exercises_per_cell" => encoding.holdout_exercises_per_cell;
    "encoding"."split_seed" => encoding.split_seed;
    "model"."kind" => model.kind;
    "model"."target" => model.target;
    "model"."dropout_rate" => model.dropout_rate;
    "model"."batchnorm" => model.batchnorm;
    "model"."kernel_width" => model.kernel_width;
    "train"."learning_rate" => train.learning_rate;
    "train"."beta1" => train.beta1;
    "train"."beta2" => train.beta2;
    "train"."epsilon" => train.epsilon;
    "train"."batch_size" => train.batch_size;
    "train"."max_epochs" => train.max_epochs;
    "train"."patience" => train.patience;
    "train"."batches_per_epoch" => train.batches_per_epoch;
    "train"."seed" => train.seed;
    "snn"."neuron" => snn.neuron;
    "snn"."amplitude" => snn.amplitude;
    "snn"."tau_rc" => snn.tau_rc;
    "snn"."tau_ref" => snn.tau_ref;
    "snn"."steps" => snn.steps;
    "snn"."dt" => snn.dt;
    "snn"."input_gain" => snn.input_gain;
    "analysis"."perplexity" => analysis.perplexity;
    "analysis"."tsne_iterations" => analysis.tsne_iterations;
    "analysis"."tsne_seed" => analysis.tsne_seed;
    "analysis"."tsne_init" => analysis.tsne_init;
    "analysis"."tsne_max_points" => analysis.tsne_max_points;
    "analysis"."embed_train" => analysis.embed_train;
    "analysis"."ablation_kind" => analysis.ablation_kind;
    "analysis"."ablation_seeds" => analysis.ablation_seeds;
    "repro"."seeds" => repro.seeds;
    "repro"."fidelity_windows" => repro.fidelity_windows;
    "repro"."gradcheck_samples" => repro.gradcheck_samples;
    "output"."dir" => output_dir;
}

impl RunConfig {
    /// Parses a config file body; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(CliError::Config(format!(
                        "line {}: unknown section [{name}]",
                        n + 1
                    )));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", n + 1))
            })?;
            let section = section.as_deref().ok_or_else(|| {
                CliError::Config(format!("line {}: key outside any section", n + 1))
            })?;
            cfg.set(&format!("{section}.{}", key.trim()), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {}", n + 1, e.message())))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies the output-directory environment override, if set.
    pub fn apply_env(&mut self) {
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output_dir = dir;
            }
        }
    }

    pub fn output_path(&self) -> PathBuf {
        PathBuf::from(&self.output_dir)
    }

    /// Checks every section for values the pipeline would reject.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let d = &self.dataset;
        if d.reps_per_cell < 2 || !(d.min_duration_s >= 2.0 && d.max_duration_s >= d.min_duration_s)
        {
            return bad(format!("invalid dataset section {d:?}"));
        }
        if d.reps_per_cell <= self.encoding.holdout_exercises_per_cell {
            return bad(format!(
                "reps_per_cell {} leaves no training exercises after holding out {}",
                d.reps_per_cell, self.encoding.holdout_exercises_per_cell
            ));
        }
        let e = &self.encoding;
        if !(e.fraction > 0.0 && e.fraction.is_finite()) || e.window_length == 0 || e.stride == 0 {
            return bad(format!("invalid encoding section {e:?}"));
        }
        self.model_spec()
            .validate()
            .map_err(CliError::from_config)?;
        self.train.validate().map_err(CliError::from_config)?;
        self.sim_config()
            .validate()
            .map_err(CliError::from_config)?;
        let a = &self.analysis;
        if !(a.perplexity > 0.0) || a.tsne_iterations == 0 || a.tsne_max_points < 3 {
            return bad(format!("invalid analysis section {a:?}"));
        }
        if self.repro.fidelity_windows == 0 || self.repro.gradcheck_samples == 0 {
            return bad("repro window and sample counts must be positive".into());
        }
        if self.output_dir.trim().is_empty() {
            return bad("output.dir is empty".into());
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        self.spec_for(self.model.kind, self.model.target)
    }

    pub fn spec_for(&self, kind: ModelKind, target: Target) -> ModelSpec {
        ModelSpec {
            dropout_rate: self.model.dropout_rate,
            batchnorm: self.model.batchnorm,
            window_length: self.encoding.window_length,
            kernel_width: self.model.kernel_width,
            ..ModelSpec::new(kind, target)
        }
    }

    pub fn neuron_model(&self) -> NeuronModel {
        NeuronModel {
            kind: self.snn.neuron,
            tau_rc: self.snn.tau_rc,
            tau_ref: self.snn.tau_ref,
            amplitude: self.snn.amplitude,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            neuron: self.neuron_model(),
            dt: self.snn.dt,
            steps: self.snn.steps,
            input_gain: self.snn.input_gain,
        }
    }

    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig {
            perplexity: self.analysis.perplexity,
            iterations: self.analysis.tsne_iterations,
            seed: self.analysis.tsne_seed,
            init: self.analysis.tsne_init,
            max_points: self.analysis.tsne_max_points,
            ..TsneConfig::default()
        }
    }

    pub fn encoding_for(&self, mode: InputMode) -> PipelineOptions {
        PipelineOptions {
            mode,
            ..self.encoding.clone()
        }
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut current = "";
        for (section, key) in KEYS {
            if *section != current {
                if !current.is_empty() {
                    writeln!(f)?;
                }
                writeln!(f, "[{section}]")?;
                current = section;
            }
            let value = self.get(&format!("{section}.{key}")).expect("listed key");
            writeln!(f, "{key} = {value}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_string();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
        assert!(text.starts_with("[dataset]\nreps_per_cell = 8\n"));
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_and_comments() {
        let cfg = RunConfig::parse("# c\n[model]\nkind = cnn\n\n[train]\nseed=7\n").unwrap();
        assert_eq!(cfg.model.kind, ModelKind::Cnn);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.dataset, DatasetConfig::default());
    }

    #[test]
    fn errors_are_config_errors() {
        for text in [
            "kind = cnn",
            "[model]\nkind = rnn",
            "[nope]\n",
            "[model]\nkind",
            "[model]\ncolor = red",
        ] {
            let err = RunConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn dotted_set_and_get() {
        let mut cfg = RunConfig::default();
        cfg.set("analysis.ablation_seeds", "1, 2,3").unwrap();
        assert_eq!(cfg.get("analysis.ablation_seeds").unwrap(), "1,2,3");
        cfg.set("snn.neuron", "lif").unwrap();
        assert_eq!(cfg.sim_config().neuron.kind, NeuronKind::Lif);
        assert!(cfg.set("snn.colour", "1").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.train.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.model.kernel_width = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.dataset.reps_per_cell = 2;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(
            reps in 3usize..50,
            fraction in 0.01f64..10.0,
            lr in 1e-6f64..1.0,
            amp in 1e-5f64..1.0,
            seeds in proptest::collection::vec(any::<u64>(), 1..5),
            camera in any::<bool>(),
        ) {
            let mut cfg = RunConfig::default();
            cfg.dataset.reps_per_cell = reps;
            cfg.dataset.camera_motion = camera;
            cfg.encoding.fraction = fraction;
            cfg.train.learning_rate = lr;
            cfg.snn.amplitude = amp;
            cfg.analysis.ablation_seeds = SeedList(seeds);
            let text = cfg.to_string();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}
