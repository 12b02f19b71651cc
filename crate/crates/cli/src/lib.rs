//! Command-line pipeline over the `kinespike` library: every stage reads its
//! inputs from and writes its artifacts to one output directory.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod repro;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::artifacts::to_json;
use crate::commands::{
    cmd_ablate, cmd_convert, cmd_embed, cmd_encode, cmd_eval, cmd_gen, cmd_train, Context,
    EvalSubject,
};
use crate::config::{RunConfig, KEYS};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "kinespike",
    version,
    about = "Event encoding, classification and spiking conversion of surgical kinematic logs",
    after_help = "Any config key can be overridden as --section.key VALUE (for example --train.max_epochs 5)."
)]
pub struct Cli {
    /// Config file (`[section]` headers with `key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker cap for dataset generation and ablation.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// No progress lines on standard error.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic log corpus and manifest.
    Gen,
    /// Split, calibrate and encode the corpus.
    Encode,
    /// Train the configured model.
    Train,
    /// Convert a trained model to a spiking network.
    Convert(ModelArg),
    /// Evaluate a trained model or converted spiking network on the test split.
    Eval(EvalArgs),
    /// Leave-one-feature-out ablation.
    Ablate,
    /// t-SNE of a model's penultimate activations.
    Embed(ModelArg),
    /// Run the whole pipeline and print the acceptance table.
    Repro,
    /// Print the effective configuration.
    Config,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model file; defaults to the configured model.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, conflicts_with = "snn")]
    pub model: Option<PathBuf>,
    /// Spiking network file written by `convert`.
    #[arg(long)]
    pub snn: Option<PathBuf>,
    /// Also write the spiking simulation trace of the first test window.
    #[arg(long, requires = "snn")]
    pub trace: bool,
}

/// Splits `--section.key VALUE` / `--section.key=VALUE` overrides from the
/// remaining arguments.
pub fn split_overrides(args: Vec<String>) -> CliResult<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        let is_key = key
            .split_once('.')
            .is_some_and(|(section, _)| KEYS.iter().any(|(s, _)| *s == section));
        if !is_key {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| CliError::Config(format!("--{key} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

/// Builds the effective configuration: defaults, then the file, then the
/// output-directory environment override, then command-line overrides.
pub fn resolve_config(
    file: Option<&PathBuf>,
    overrides: &[(String, String)],
) -> CliResult<RunConfig> {
    let mut cfg = match file {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    for (key, value) in overrides {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli, ctx: &Context) -> CliResult<(String, bool)> {
    let out = match &cli.command {
        Command::Gen => to_json(&cmd_gen(ctx)?),
        Command::Encode => to_json(&cmd_encode(ctx)?),
        Command::Train => to_json(&cmd_train(ctx)?),
        Command::Convert(m) => format!("{}\n", cmd_convert(ctx, m.model.as_deref())?.display()),
        Command::Eval(a) => {
            let subject = match (&a.model, &a.snn) {
                (_, Some(snn)) => EvalSubject::Snn(snn.clone()),
                (Some(model), None) => EvalSubject::Model(model.clone()),
                (None, None) => EvalSubject::Model(ctx.default_model()),
            };
            to_json(&cmd_eval(ctx, &subject, a.trace)?)
        }
        Command::Ablate => cmd_ablate(ctx)?.to_csv(),
        Command::Embed(m) => to_json(&cmd_embed(ctx, m.model.as_deref())?.1),
        Command::Config => ctx.cfg.to_string(),
        Command::Repro => {
            let checks = repro::cmd_repro(ctx)?;
            let passed = checks.iter().filter(|c| c.passed).count();
            let mut table: String = checks.iter().map(|c| c.line() + "\n").collect();
            table += &format!("{passed}/{} checks passed\n", checks.len());
            return Ok((table, passed == checks.len()));
        }
    };
    Ok((out, true))
}

/// Runs the command line and returns the process exit status.
pub fn run(args: Vec<String>) -> i32 {
    let (rest, overrides) = match split_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {}", e);
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();

    let result = resolve_config(cli.config.as_ref(), &overrides).and_then(|cfg| {
        let mut ctx = Context::new(cfg, cli.jobs);
        ctx.quiet = cli.quiet;
        execute(&cli, &ctx)
    });
    match result {
        Ok((out, ok)) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.as_bytes());
            let _ = stdout.flush();
            if ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
