use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use imbalml::corpus::{
    generate_synthetic, load_dataset, split_train_dev, split_train_dev_stratified,
};
use imbalml::metrics::classification_report;
use imbalml::model::save_checkpoint;
use imbalml::trainer::{self, class_weights_for, StopReason};
use imbalml::{
    Dataset, EncodedDataset, LabelSpace, MetricsReport, ModelConfig, ModelParams, PredictionSet,
    Vocabulary,
};
use log::{info, warn};

use crate::artifacts::{self, RunManifest, Seeds};
use crate::config::{write_json, ExperimentConfig};

/// Everything needed to train, derived from the config.
pub struct Prepared {
    pub seeds: Seeds,
    pub space: LabelSpace,
    pub vocab: Vocabulary,
    pub train: EncodedDataset,
    pub dev: EncodedDataset,
    pub model: ModelConfig,
}

fn load_split(
    config: &ExperimentConfig,
    space: &LabelSpace,
    seeds: &Seeds,
) -> Result<(Dataset, Dataset)> {
    let data = &config.data;
    let full = match (&data.train, &data.synthetic) {
        (Some(path), _) => {
            let train = load_dataset(path, config.format_for(path), space)?;
            if let Some(dev_path) = &data.dev {
                let dev = load_dataset(dev_path, config.format_for(dev_path), space)?;
                return Ok((train, dev));
            }
            train
        }
        (None, Some(synth)) => generate_synthetic(synth, seeds.synth)?,
        (None, None) => unreachable!("validated"),
    };
    let split = if data.stratified {
        split_train_dev_stratified(&full, data.train_fraction, seeds.split)?
    } else {
        split_train_dev(&full, data.train_fraction, seeds.split)?
    };
    Ok(split)
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let seeds = Seeds::expand(config.seed);
    let space = config.label_space()?;
    let (train, dev) = load_split(config, &space, &seeds)?;
    if train.is_empty() || dev.is_empty() {
        return Err(imbalml::Error::EmptyDataset(format!(
            "split left {} training and {} dev records",
            train.len(),
            dev.len()
        ))
        .into());
    }
    let enc = &config.encoding;
    let vocab = Vocabulary::build(train.texts(), enc.max_vocab, enc.min_freq, enc.lowercase)?;
    let model = config
        .model
        .to_model_config(vocab.len(), enc.max_len, space.len());
    info!(
        "{} training and {} dev records, vocabulary of {}",
        train.len(),
        dev.len(),
        vocab.len()
    );
    Ok(Prepared {
        seeds,
        train: EncodedDataset::from_dataset(&train, &vocab, enc.max_len),
        dev: EncodedDataset::from_dataset(&dev, &vocab, enc.max_len),
        space,
        vocab,
        model,
    })
}

/// Report with ROC-AUC when some class allows it, without otherwise.
pub fn build_report(
    set: &PredictionSet,
    truth: &EncodedDataset,
    space: &LabelSpace,
) -> Result<MetricsReport> {
    match classification_report(
        set.assigned.view(),
        truth.labels.view(),
        Some(&set.probs),
        space,
    ) {
        Err(imbalml::Error::UndefinedMetric(msg)) if msg.contains("ROC-AUC") => {
            warn!("{msg}; reporting without ROC-AUC");
            Ok(classification_report(
                set.assigned.view(),
                truth.labels.view(),
                None,
                space,
            )?)
        }
        other => Ok(other?),
    }
}

pub fn write_report(dir: &Path, report: &MetricsReport) -> Result<()> {
    std::fs::write(dir.join(artifacts::REPORT_JSON), report.to_json()? + "\n")?;
    std::fs::write(dir.join(artifacts::REPORT_TEXT), report.render_text())?;
    Ok(())
}

fn history_csv(history: &imbalml::TrainHistory) -> String {
    let mut out = String::from("epoch,train_loss,dev_macro_f1,learning_rate\n");
    for e in &history.epochs {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.epoch, e.train_loss, e.dev_macro_f1, e.learning_rate
        );
    }
    out
}

pub fn run(config: &ExperimentConfig) -> Result<u8> {
    let prep = prepare(config)?;
    let dir = artifacts::run_dir(config);
    artifacts::create_dir(&dir)?;

    let mut train_config = config.train.clone();
    train_config.seed = prep.seeds.train;
    let weights = if train_config.use_class_weights {
        Some(class_weights_for(&prep.train, prep.space.names())?)
    } else {
        None
    };
    let init = ModelParams::init(&prep.model, prep.seeds.init)?;
    let outcome = trainer::train(
        init,
        &prep.train,
        &prep.dev,
        &train_config,
        weights.as_ref(),
    )?;

    let (set, _) = trainer::evaluate(&outcome.params, &prep.dev, &train_config.policy)?;
    let report = build_report(&set, &prep.dev, &prep.space)?;

    save_checkpoint(&outcome.params, dir.join(artifacts::CHECKPOINT))?;
    prep.vocab.save(dir.join(artifacts::VOCAB))?;
    write_report(&dir, &report)?;
    std::fs::write(
        dir.join(artifacts::HISTORY_CSV),
        history_csv(&outcome.history),
    )?;
    let manifest = RunManifest {
        run_id: config.run_id(),
        tag: artifacts::tag(train_config.use_class_weights).to_string(),
        config: config.clone(),
        seeds: prep.seeds,
        labels: prep.space.names().to_vec(),
        encoding: config.encoding.clone(),
        model: prep.model.clone(),
        train: train_config,
        class_weights: outcome
            .class_weights
            .as_ref()
            .map(|w| w.as_slice().to_vec()),
        num_train: prep.train.len(),
        num_dev: prep.dev.len(),
        vocab_size: prep.vocab.len(),
        param_fingerprint: format!("{:016x}", outcome.params.fingerprint()),
        history: outcome.history.clone(),
        checkpoint: artifacts::CHECKPOINT.to_string(),
        summary: report.summary_line(),
    };
    write_json(&dir.join(artifacts::MANIFEST), &manifest)?;

    println!("{}", MetricsReport::summary_header());
    println!("{}", report.summary_line());
    eprintln!("run written to {}", dir.display());
    if let StopReason::Aborted { epoch, message } = &outcome.history.stop_reason {
        eprintln!(
            "error: training diverged in epoch {epoch}: {message}; saved the last good model"
        );
        return Ok(1);
    }
    Ok(0)
}
