//! `imbalml` command-line entry point.

mod artifacts;
mod cmd_data;
mod cmd_eval;
mod cmd_train;
mod cmd_tune;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad arguments or configuration; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "imbalml",
    version,
    about = "Multi-label emotion detection experiments with class-weighted loss",
    after_help = "Commands taking --config also accept `--section.field value` overrides, e.g. --train.learning_rate 3e-5."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its run directory.
    Train(TrainArgs),
    /// Score a trained run or a predictions file against labelled data.
    Eval(cmd_eval::EvalArgs),
    /// Predict labels for unlabelled texts.
    Predict(cmd_eval::PredictArgs),
    /// Random search over learning rate, batch size and epochs.
    Tune(TuneArgs),
    /// Generate a synthetic labelled corpus.
    Synth(cmd_data::SynthArgs),
    /// Label distribution of a dataset.
    Stats(cmd_data::StatsArgs),
    /// Re-render a saved report.json or tuning.json as text.
    Report(cmd_data::ReportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self, mut extra: Vec<(String, String)>) -> Vec<(String, String)> {
        if let Some(seed) = self.seed {
            extra.push(("seed".into(), seed.to_string()));
        }
        if let Some(dir) = &self.output_dir {
            extra.push((
                "output_dir".into(),
                serde_json::to_string(&dir.display().to_string()).unwrap(),
            ));
        }
        if let Some(id) = &self.run_id {
            extra.push(("run_id".into(), serde_json::to_string(id).unwrap()));
        }
        extra
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Train with inverse-frequency class weights (the "+w" variant).
    #[arg(long)]
    use_class_weights: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Number of trials.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Disable median pruning.
    #[arg(long)]
    no_prune: bool,
}

fn run(command: Command, overrides: Vec<(String, String)>) -> anyhow::Result<u8> {
    let takes_overrides = matches!(command, Command::Train(_) | Command::Tune(_));
    if !takes_overrides && !overrides.is_empty() {
        return Err(UsageError(format!(
            "config overrides such as --{} only apply to train and tune",
            overrides[0].0
        ))
        .into());
    }
    match command {
        Command::Train(args) => {
            let mut extra = overrides;
            if args.use_class_weights {
                extra.push(("train.use_class_weights".into(), "true".into()));
            }
            let cfg = config::load_config(&args.common.config, &args.common.overrides(extra))?;
            cmd_train::run(&cfg)
        }
        Command::Tune(args) => {
            let cfg = config::load_config(&args.common.config, &args.common.overrides(overrides))?;
            cmd_tune::run(&cfg, args.trials, !args.no_prune)
        }
        Command::Eval(args) => cmd_eval::run_eval(&args),
        Command::Predict(args) => cmd_eval::run_predict(&args),
        Command::Synth(args) => cmd_data::run_synth(&args),
        Command::Stats(args) => cmd_data::run_stats(&args),
        Command::Report(args) => cmd_data::run_report(&args),
    }
}

/// 2 for usage and validation failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<imbalml::Error>() {
            return match e {
                imbalml::Error::Schema(_)
                | imbalml::Error::Parse { .. }
                | imbalml::Error::EmptyDataset(_)
                | imbalml::Error::InvalidArgument(_)
                | imbalml::Error::ZeroFrequency { .. } => 2,
                imbalml::Error::Io { source, .. }
                    if source.kind() == std::io::ErrorKind::NotFound =>
                {
                    2
                }
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if e.kind() == std::io::ErrorKind::NotFound {
                return 2;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    let (args, overrides) = match config::extract_overrides(args) {
        Ok(split) => split,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command, overrides) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
