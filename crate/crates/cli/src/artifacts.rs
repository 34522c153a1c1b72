//! Run directory layout and the manifest tying its files together.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use imbalml::encoding::EncodingConfig;
use imbalml::model::load_checkpoint;
use imbalml::{seed, LabelSpace, ModelConfig, ModelParams, TrainConfig, TrainHistory, Vocabulary};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::UsageError;

pub const MANIFEST: &str = "manifest.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const VOCAB: &str = "vocab.tsv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const HISTORY_CSV: &str = "history.csv";

/// Per-component seeds expanded from the top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub root: u64,
    pub synth: u64,
    pub split: u64,
    pub init: u64,
    pub train: u64,
    pub tune: u64,
}

impl Seeds {
    pub fn expand(root: u64) -> Self {
        Self {
            root,
            synth: seed::derive(root, "synth"),
            split: seed::derive(root, "split"),
            init: seed::derive(root, "init"),
            train: seed::derive(root, "train"),
            tune: seed::derive(root, "tune"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// `base` or `+w`.
    pub tag: String,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub labels: Vec<String>,
    pub encoding: EncodingConfig,
    pub model: ModelConfig,
    /// The training settings actually used, seed included.
    pub train: TrainConfig,
    pub class_weights: Option<Vec<f64>>,
    pub num_train: usize,
    pub num_dev: usize,
    pub vocab_size: usize,
    pub param_fingerprint: String,
    pub history: TrainHistory,
    pub checkpoint: String,
    pub summary: String,
}

pub fn tag(use_class_weights: bool) -> &'static str {
    if use_class_weights {
        "+w"
    } else {
        "base"
    }
}

/// A trained run loaded back from disk.
pub struct Run {
    pub manifest: RunManifest,
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub space: LabelSpace,
}

pub fn load_run(dir: &Path) -> Result<Run> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(UsageError(format!(
            "`{}` is not a run directory (no {MANIFEST})",
            dir.display()
        ))
        .into());
    }
    let text = std::fs::read_to_string(&manifest_path)
        .with_context(|| format!("cannot read `{}`", manifest_path.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("`{}`: {e}", manifest_path.display())))?;
    let params = load_checkpoint(dir.join(&manifest.checkpoint))?;
    let vocab = Vocabulary::load(dir.join(VOCAB), manifest.encoding.lowercase)?;
    let space = LabelSpace::new(manifest.labels.clone())?;
    if params.config != manifest.model {
        return Err(imbalml::Error::Schema(format!(
            "checkpoint in `{}` does not match the model recorded in its manifest",
            dir.display()
        ))
        .into());
    }
    if params.config.num_classes != space.len() || params.config.vocab_size != vocab.len() {
        return Err(imbalml::Error::Schema(format!(
            "checkpoint expects {} classes and {} tokens; run has {} labels and {} tokens",
            params.config.num_classes,
            params.config.vocab_size,
            space.len(),
            vocab.len()
        ))
        .into());
    }
    Ok(Run {
        manifest,
        params,
        vocab,
        space,
    })
}

pub fn run_dir(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.join(config.run_id())
}

/// Creates the directory, reporting an unwritable location as a usage error.
pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        UsageError(format!(
            "cannot create output directory `{}`: {e}",
            dir.display()
        ))
    })?;
    Ok(())
}
