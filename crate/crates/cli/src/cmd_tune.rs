use std::fmt::Write as _;

use anyhow::Result;
use imbalml::trainer::{self, TrialStatus, TuneOptions};
use imbalml::{ModelParams, TrainConfig, TrialRecord};
use serde::{Deserialize, Serialize};

use crate::artifacts;
use crate::cmd_train::prepare;
use crate::config::{write_json, ExperimentConfig};
use crate::UsageError;

pub const TUNING_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningReport {
    pub schema_version: u32,
    pub seed: u64,
    pub best_trial: usize,
    pub best: TrainConfig,
    /// Sorted by dev Macro F1, best first.
    pub trials: Vec<TrialRecord>,
}

impl TuningReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5}  {:>10}  {:>5}  {:>6}  {:>8}  status",
            "trial", "η", "batch", "epochs", "Macro F1"
        );
        for t in &self.trials {
            let status = match (t.status, t.pruned_epoch) {
                (TrialStatus::Pruned, Some(e)) => format!("pruned@{e}"),
                (TrialStatus::Pruned, None) => "pruned".to_string(),
                (TrialStatus::Completed, _) => "completed".to_string(),
            };
            let _ = writeln!(
                out,
                "{:>5}  {:>10.3e}  {:>5}  {:>6}  {:>8.4}  {status}",
                t.id,
                t.config.learning_rate,
                t.config.batch_size,
                t.config.num_epochs,
                t.dev_macro_f1
            );
        }
        let _ = writeln!(out, "\nbest trial: {}", self.best_trial);
        out
    }
}

/// Worker count from `IMBALML_THREADS`, or 0 for all cores.
fn workers() -> Result<usize> {
    match std::env::var("IMBALML_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(UsageError(format!(
                "IMBALML_THREADS must be a positive integer, got `{v}`"
            ))
            .into()),
        },
        Err(_) => Ok(0),
    }
}

pub fn run(config: &ExperimentConfig, trials: usize, prune: bool) -> Result<u8> {
    if trials < 1 {
        return Err(UsageError("--trials must be at least 1".into()).into());
    }
    let prep = prepare(config)?;
    let dir = config.output_dir.join(
        config
            .run_id
            .clone()
            .unwrap_or_else(|| format!("tune-s{}", config.seed)),
    );
    artifacts::create_dir(&dir)?;

    let options = TuneOptions {
        budget: trials,
        seed: prep.seeds.tune,
        workers: workers()?,
        prune: prune && config.tune.prune,
        startup_trials: config.tune.startup_trials,
    };
    let mut base = config.train.clone();
    base.seed = prep.seeds.train;
    let init = ModelParams::init(&prep.model, prep.seeds.init)?;
    let outcome = trainer::tune(
        &config.tune.space,
        &options,
        &base,
        &init,
        &prep.train,
        &prep.dev,
    )?;

    let mut sorted = outcome.trials.clone();
    sorted.sort_by(|a, b| {
        b.dev_macro_f1
            .total_cmp(&a.dev_macro_f1)
            .then(a.id.cmp(&b.id))
    });
    let report = TuningReport {
        schema_version: TUNING_SCHEMA_VERSION,
        seed: config.seed,
        best_trial: outcome.best_trial,
        best: outcome.best.clone(),
        trials: sorted,
    };
    write_json(&dir.join("tuning.json"), &report)?;
    let text = report.render_text();
    std::fs::write(dir.join("tuning.txt"), &text)?;

    let mut profile = config.clone();
    profile.train = TrainConfig {
        seed: config.train.seed,
        ..outcome.best
    };
    profile.run_id = None;
    profile.output_dir = dir.clone();
    write_json(&dir.join("best_profile.json"), &profile)?;

    print!("{text}");
    eprintln!("tuning written to {}", dir.display());
    Ok(0)
}
