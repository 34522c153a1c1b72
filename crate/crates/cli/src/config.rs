//! Experiment configuration: a JSON file plus `--dotted.path value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use imbalml::corpus::{DataFormat, DEFAULT_LABELS};
use imbalml::encoding::EncodingConfig;
use imbalml::model::{ModelConfig, Pooling};
use imbalml::trainer::{SearchSpace, TrainConfig};
use imbalml::{LabelSpace, SynthConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub tune: TuneSection,
    /// Top-level seed; split, init, training and synthesis seeds derive from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Defaults to `run-s<seed>`, with `-w` appended for class-weighted runs.
    #[serde(default)]
    pub run_id: Option<String>,
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SynthConfig>,
    /// Inferred from the file extension when absent.
    #[serde(default)]
    pub format: Option<DataFormat>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    /// Share kept for training when no dev file is given.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub stratified: bool,
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub feedforward_dim: usize,
    pub dropout_rate: f64,
    pub pooling: Pooling,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::new(1, 1, 1);
        Self {
            embed_dim: m.embed_dim,
            num_heads: m.num_heads,
            num_layers: m.num_layers,
            feedforward_dim: m.feedforward_dim,
            dropout_rate: m.dropout_rate,
            pooling: m.pooling,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(
        &self,
        vocab_size: usize,
        max_len: usize,
        num_classes: usize,
    ) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            num_heads: self.num_heads,
            num_layers: self.num_layers,
            feedforward_dim: self.feedforward_dim,
            max_len,
            num_classes,
            dropout_rate: self.dropout_rate,
            pooling: self.pooling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneSection {
    pub space: SearchSpace,
    pub startup_trials: usize,
    pub prune: bool,
}

impl Default for TuneSection {
    fn default() -> Self {
        let o = imbalml::trainer::TuneOptions::default();
        Self {
            space: SearchSpace::default(),
            startup_trials: o.startup_trials,
            prune: o.prune,
        }
    }
}

impl ExperimentConfig {
    pub fn label_space(&self) -> Result<LabelSpace> {
        let space = match (&self.data.labels, &self.data.synthetic) {
            (Some(names), _) => LabelSpace::new(names.clone())?,
            (None, Some(synth)) => synth.label_space()?,
            (None, None) => LabelSpace::new(DEFAULT_LABELS)?,
        };
        Ok(space)
    }

    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| {
            let tag = if self.train.use_class_weights {
                "-w"
            } else {
                ""
            };
            format!("run-s{}{tag}", self.seed)
        })
    }

    /// Checks field values and that every referenced path exists.
    pub fn validate(&self) -> Result<()> {
        let usage = |msg: String| anyhow::Error::new(UsageError(msg));
        match (&self.data.train, &self.data.synthetic) {
            (Some(_), Some(_)) => {
                return Err(usage(
                    "data: give either `train` or `synthetic`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(usage(
                    "data: one of `train` or `synthetic` is required".into(),
                ))
            }
            (None, Some(_)) if self.data.dev.is_some() => {
                return Err(usage(
                    "data: `dev` cannot be combined with `synthetic`".into(),
                ))
            }
            _ => {}
        }
        for path in [&self.data.train, &self.data.dev].into_iter().flatten() {
            if !path.exists() {
                return Err(usage(format!(
                    "data file `{}` does not exist",
                    path.display()
                )));
            }
            if self.data.format.is_none() && DataFormat::from_path(path).is_none() {
                return Err(usage(format!(
                    "cannot infer the format of `{}`; set data.format to csv or jsonl",
                    path.display()
                )));
            }
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0)
            && self.data.dev.is_none()
        {
            return Err(usage(format!(
                "data.train_fraction must lie in (0, 1) when no dev file is given, got {}",
                self.data.train_fraction
            )));
        }
        if self.encoding.max_len < 2 {
            return Err(usage("encoding.max_len must be at least 2".into()));
        }
        self.label_space()
            .map_err(|e| usage(format!("labels: {e}")))?;
        self.model
            .to_model_config(4, self.encoding.max_len, 2)
            .validate()
            .map_err(|e| usage(format!("model: {e}")))?;
        self.train
            .validate()
            .map_err(|e| usage(format!("train: {e}")))?;
        self.tune
            .space
            .validate()
            .map_err(|e| usage(format!("tune.space: {e}")))?;
        if let Some(id) = &self.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return Err(usage(format!(
                    "run_id `{id}` is not a plain directory name"
                )));
            }
        }
        Ok(())
    }

    pub fn format_for(&self, path: &Path) -> DataFormat {
        self.data
            .format
            .or_else(|| DataFormat::from_path(path))
            .unwrap_or(DataFormat::Csv)
    }
}

/// `(dotted.path, raw value)` pairs.
pub type Overrides = Vec<(String, String)>;

/// Splits `--a.b value` pairs (flags containing a dot) out of the argument
/// list; everything else is returned untouched for the regular parser.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let dotted = arg
            .strip_prefix("--")
            .filter(|name| name.contains('.') && !name.starts_with('-'))
            .map(str::to_string);
        match dotted {
            Some(name) => {
                let (key, value) = match name.split_once('=') {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => {
                        let v = iter.next().ok_or_else(|| {
                            UsageError(format!("override --{name} needs a value"))
                        })?;
                        (name, v)
                    }
                };
                overrides.push((key, value));
            }
            None => rest.push(arg),
        }
    }
    Ok((rest, overrides))
}

/// Sets `value` at a dotted path, creating objects on the way. The value is
/// parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(UsageError(format!("malformed override path `{path}`")).into());
    }
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just set")
            }
            _ => {
                return Err(UsageError(format!(
                    "override `{path}`: `{}` is not an object",
                    parts[..i].join(".")
                ))
                .into())
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config `{}`: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| {
        UsageError(format!(
            "config `{}` is not valid JSON: {e}",
            path.display()
        ))
    })?;
    for (key, raw) in overrides {
        apply_override(&mut value, key, raw)?;
    }
    let config: ExperimentConfig = serde_json::from_value(value)
        .map_err(|e| UsageError(format!("config `{}`: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write `{}`", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_split_from_arguments() {
        let args = [
            "--config",
            "x.json",
            "--train.learning_rate",
            "0.01",
            "--model.pooling=mean",
            "--use-class-weights",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let (rest, o) = extract_overrides(args).unwrap();
        assert_eq!(rest, vec!["--config", "x.json", "--use-class-weights"]);
        assert_eq!(
            o,
            vec![
                ("train.learning_rate".to_string(), "0.01".to_string()),
                ("model.pooling".to_string(), "mean".to_string())
            ]
        );
        assert!(extract_overrides(vec!["--a.b".to_string()]).is_err());
    }

    #[test]
    fn override_values_are_typed() {
        let mut v = serde_json::json!({"train": {"batch_size": 8}});
        apply_override(&mut v, "train.batch_size", "16").unwrap();
        apply_override(&mut v, "model.pooling", "mean").unwrap();
        apply_override(&mut v, "data.labels", "[\"a\",\"b\"]").unwrap();
        assert_eq!(v["train"]["batch_size"], 16);
        assert_eq!(v["model"]["pooling"], "mean");
        assert_eq!(v["data"]["labels"][1], "b");
        assert!(apply_override(&mut v, "train.batch_size.x", "1").is_err());
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c: ExperimentConfig = serde_json::from_value(
            serde_json::json!({"data": {"synthetic": {"n": 10, "prevalence": [0.5, 0.5]}}}),
        )
        .unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.run_id(), "run-s42");
        c.validate().unwrap();
        assert_eq!(c.label_space().unwrap().names(), ["class0", "class1"]);
    }

    #[test]
    fn unknown_fields_are_named() {
        let err = serde_json::from_value::<ExperimentConfig>(
            serde_json::json!({"data": {}, "trian": {}}),
        )
        .unwrap_err();
        assert!(err.to_string().contains("trian"));
    }
}
