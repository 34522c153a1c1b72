//! AdamW training with a linear schedule, dev-set Macro F1 model selection,
//! optional early stopping and seeded hyperparameter search.

mod optim;
mod tune;

use log::{debug, warn};
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{label_frequencies_of, Dataset};
use crate::encoding::{EncodedBatch, Vocabulary};
use crate::error::{Error, Result};
use crate::inference::{predict, PredictionPolicy, PredictionSet};
use crate::metrics::{confusion_counts, macro_f1};
use crate::model::{backward, forward, infer, ModelParams};
use crate::objective::{
    bce_loss, compute_class_weights, smooth_labels, weighted_bce_loss, ClassWeights, SmoothingConfig, WeightScheme,
};
use crate::{inference, seed};

pub use optim::{adamw_step, linear_schedule, warmup_steps, AdamWSettings, OptimizerState, ADAM_EPSILON, BETA1, BETA2};
pub use tune::{
    evaluate_configs, tune, SearchSpace, TrialRecord, TrialStatus, TuneOptions, TuneOutcome,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub num_epochs: usize,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    /// Epochs without dev improvement before stopping; 0 disables.
    pub patience: usize,
    pub use_class_weights: bool,
    pub weight_scheme: WeightScheme,
    pub smoothing: SmoothingConfig,
    pub policy: PredictionPolicy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2.45e-5,
            batch_size: 8,
            num_epochs: 3,
            weight_decay: 0.01,
            warmup_fraction: 0.1,
            patience: 0,
            use_class_weights: false,
            weight_scheme: WeightScheme::WholeTerm,
            smoothing: SmoothingConfig::default(),
            policy: PredictionPolicy::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.num_epochs == 0 {
            return Err(Error::InvalidArgument("num_epochs must be at least 1".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidArgument(format!(
                "warmup_fraction must lie in [0, 1], got {}",
                self.warmup_fraction
            )));
        }
        SmoothingConfig::new(self.smoothing.epsilon())?;
        self.policy.validate()
    }
}

/// Encoded inputs with their label matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub batch: EncodedBatch,
    pub labels: Array2<u8>,
}

impl EncodedDataset {
    pub fn new(batch: EncodedBatch, labels: Array2<u8>) -> Result<Self> {
        if batch.len() != labels.nrows() {
            return Err(Error::Contract(format!(
                "{} encoded rows but {} label rows",
                batch.len(),
                labels.nrows()
            )));
        }
        Ok(Self { batch, labels })
    }

    pub fn from_dataset(data: &Dataset, vocab: &Vocabulary, max_len: usize) -> Self {
        Self {
            batch: vocab.encode_batch(data.texts(), max_len),
            labels: data.label_matrix(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.labels.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            batch: self.batch.select(rows),
            labels: self.labels.select(ndarray::Axis(0), rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_macro_f1: f64,
    /// Rate used by the epoch's last update.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    EarlyStopped,
    /// Halted by the epoch observer.
    Halted,
    /// A non-finite loss or gradient; the returned parameters are the best seen
    /// before it, or the initial ones.
    Aborted { epoch: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 0 when no epoch finished.
    pub best_epoch: usize,
    pub best_dev_macro_f1: f64,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub class_weights: Option<ClassWeights>,
}

/// Verdict of an epoch observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochControl {
    Continue,
    Halt,
}

/// Assigned labels and the Macro F1 against the truth.
pub fn evaluate(params: &ModelParams, data: &EncodedDataset, policy: &PredictionPolicy) -> Result<(PredictionSet, f64)> {
    let logits = infer(params, &data.batch)?;
    let set = predict(&logits, policy)?;
    let counts = confusion_counts(set.assigned.view(), data.labels.view())?;
    let f1 = macro_f1(&counts.per_class_f1())?;
    Ok((set, f1))
}

/// Weights from the positive counts of a training label matrix.
pub fn class_weights_for(train: &EncodedDataset, names: &[String]) -> Result<ClassWeights> {
    compute_class_weights(&label_frequencies_of(train.labels.view()), names, false)
}

pub fn train(
    params: ModelParams,
    train_data: &EncodedDataset,
    dev_data: &EncodedDataset,
    config: &TrainConfig,
    weights: Option<&ClassWeights>,
) -> Result<TrainOutcome> {
    train_observed(params, train_data, dev_data, config, weights, |_, _| EpochControl::Continue)
}

/// [`train`] with a callback after each epoch's dev evaluation. The callback
/// receives the 1-based epoch and its dev Macro F1 and may halt the run.
pub fn train_observed(
    mut params: ModelParams,
    train_data: &EncodedDataset,
    dev_data: &EncodedDataset,
    config: &TrainConfig,
    weights: Option<&ClassWeights>,
    mut observer: impl FnMut(usize, f64) -> EpochControl,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_data.is_empty() || dev_data.is_empty() {
        return Err(Error::EmptyDataset("training and dev sets must be nonempty".into()));
    }
    let c = params.config.num_classes;
    if train_data.num_classes() != c || dev_data.num_classes() != c {
        return Err(Error::Schema(format!(
            "model has {c} classes but the data has {} (train) and {} (dev)",
            train_data.num_classes(),
            dev_data.num_classes()
        )));
    }
    let class_weights = match (config.use_class_weights, weights) {
        (true, Some(w)) => Some(w.clone()),
        (true, None) => {
            let names: Vec<String> = (0..c).map(|j| format!("class {j}")).collect();
            Some(class_weights_for(train_data, &names)?)
        }
        (false, Some(_)) => {
            return Err(Error::InvalidArgument(
                "class weights were supplied but use_class_weights is off".into(),
            ))
        }
        (false, None) => None,
    };
    if let Some(w) = &class_weights {
        if w.len() != c {
            return Err(Error::Contract(format!("{} class weights for {c} classes", w.len())));
        }
    }

    let n = train_data.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.num_epochs;
    let shuffle_seed = seed::derive(config.seed, "shuffle");
    let dropout_seed = seed::derive(config.seed, "dropout");
    let mut state = OptimizerState::new(&params.config);
    let mut step = 0usize;

    let mut best = params.clone();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_macro_f1: 0.0,
        stop_reason: StopReason::Completed,
    };
    let mut since_best = 0usize;

    for epoch in 1..=config.num_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed::derive_index(shuffle_seed, epoch as u64)));
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        let mut failure = None;
        for rows in order.chunks(config.batch_size) {
            lr = linear_schedule(step, total_steps, config.warmup_fraction, config.learning_rate);
            match train_step(&mut params, &mut state, train_data, rows, config, class_weights.as_ref(), lr, seed::derive_index(dropout_seed, step as u64)) {
                Ok(loss) => loss_sum += loss * rows.len() as f64,
                Err(e @ Error::NonFinite(_)) => {
                    failure = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
            step += 1;
        }
        if let Some(message) = failure {
            warn!("training aborted in epoch {epoch}: {message}");
            history.stop_reason = StopReason::Aborted { epoch, message };
            break;
        }
        let (_, dev_f1) = evaluate(&params, dev_data, &config.policy)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            dev_macro_f1: dev_f1,
            learning_rate: lr,
        };
        debug!(
            "epoch {epoch}: train loss {:.6}, dev macro F1 {:.4}, lr {:.3e}",
            record.train_loss, dev_f1, lr
        );
        history.epochs.push(record);
        if history.best_epoch == 0 || dev_f1 > history.best_dev_macro_f1 {
            history.best_epoch = epoch;
            history.best_dev_macro_f1 = dev_f1;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        if observer(epoch, dev_f1) == EpochControl::Halt {
            history.stop_reason = StopReason::Halted;
            break;
        }
        if config.patience > 0 && since_best >= config.patience && epoch < config.num_epochs {
            history.stop_reason = StopReason::EarlyStopped;
            break;
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        class_weights,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    data: &EncodedDataset,
    rows: &[usize],
    config: &TrainConfig,
    weights: Option<&ClassWeights>,
    lr: f64,
    dropout_seed: u64,
) -> Result<f64> {
    let batch = data.batch.select(rows);
    let labels = data.labels.select(ndarray::Axis(0), rows).mapv(f64::from);
    let targets = smooth_labels(labels.view(), config.smoothing, params.config.num_classes);
    let (logits, trace) = forward(params, &batch, true, dropout_seed)?;
    let probs = inference::predict_probs(&logits);
    let out = match weights {
        Some(w) => weighted_bce_loss(&probs, targets.view(), w, config.weight_scheme)?,
        None => bce_loss(&probs, targets.view())?,
    };
    if !out.loss.is_finite() {
        return Err(Error::NonFinite(format!("loss is {}", out.loss)));
    }
    let grads = backward(params, &trace, out.grad_logits.view())?;
    adamw_step(params, &grads, state, lr, config.weight_decay)?;
    Ok(out.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthConfig};
    use crate::encoding::EncodingConfig;
    use crate::model::ModelConfig;

    pub(crate) fn toy_setup(n: usize, seed: u64) -> (ModelParams, EncodedDataset, EncodedDataset) {
        let mut cfg = SynthConfig::new(n, vec![0.2, 0.5, 0.3]);
        cfg.filler_vocab = 20;
        let data = generate_synthetic(&cfg, seed).unwrap();
        let (tr, dev) = crate::corpus::split_train_dev(&data, 0.75, seed).unwrap();
        let enc = EncodingConfig::default();
        let vocab = Vocabulary::build(tr.texts(), enc.max_vocab, 1, true).unwrap();
        let max_len = 12;
        let mut model = ModelConfig::new(vocab.len(), max_len, 3);
        model.embed_dim = 8;
        model.num_heads = 2;
        model.num_layers = 1;
        model.feedforward_dim = 16;
        let params = ModelParams::init(&model, seed).unwrap();
        (
            params,
            EncodedDataset::from_dataset(&tr, &vocab, max_len),
            EncodedDataset::from_dataset(&dev, &vocab, max_len),
        )
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            learning_rate: 3e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn patience_off_runs_every_epoch() {
        let (p, tr, dev) = toy_setup(40, 1);
        let out = train(p, &tr, &dev, &quick_config(), None).unwrap();
        assert_eq!(out.history.epochs.len(), 3);
        assert_eq!(out.history.stop_reason, StopReason::Completed);
        let max = out.history.epochs.iter().map(|e| e.dev_macro_f1).fold(f64::MIN, f64::max);
        assert_eq!(out.history.best_dev_macro_f1, max);
    }

    #[test]
    fn same_seed_same_history() {
        let (p, tr, dev) = toy_setup(40, 2);
        let a = train(p.clone(), &tr, &dev, &quick_config(), None).unwrap();
        let b = train(p, &tr, &dev, &quick_config(), None).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn unit_weights_match_unweighted_training() {
        let (p, tr, dev) = toy_setup(40, 3);
        let plain = train(p.clone(), &tr, &dev, &quick_config(), None).unwrap();
        let cfg = TrainConfig {
            use_class_weights: true,
            ..quick_config()
        };
        let unit = ClassWeights::uniform(3);
        let weighted = train(p, &tr, &dev, &cfg, Some(&unit)).unwrap();
        assert_eq!(plain.history, weighted.history);
        assert_eq!(plain.params, weighted.params);
    }

    #[test]
    fn best_checkpoint_reevaluates_to_reported_score() {
        let (p, tr, dev) = toy_setup(60, 4);
        let cfg = TrainConfig {
            num_epochs: 4,
            ..quick_config()
        };
        let out = train(p, &tr, &dev, &cfg, None).unwrap();
        let (_, f1) = evaluate(&out.params, &dev, &cfg.policy).unwrap();
        assert_eq!(f1, out.history.best_dev_macro_f1);
    }

    #[test]
    fn observer_can_halt() {
        let (p, tr, dev) = toy_setup(40, 5);
        let out = train_observed(p, &tr, &dev, &quick_config(), None, |e, _| {
            if e == 1 {
                EpochControl::Halt
            } else {
                EpochControl::Continue
            }
        })
        .unwrap();
        assert_eq!(out.history.epochs.len(), 1);
        assert_eq!(out.history.stop_reason, StopReason::Halted);
    }

    #[test]
    fn divergent_run_aborts_with_last_good_params() {
        let (p, tr, dev) = toy_setup(40, 6);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            warmup_fraction: 0.0,
            weight_decay: 0.0,
            ..quick_config()
        };
        let initial = p.clone();
        let out = train(p, &tr, &dev, &cfg, None).unwrap();
        assert!(matches!(out.history.stop_reason, StopReason::Aborted { .. }));
        assert!(out.params.weights.all_finite());
        if out.history.best_epoch == 0 {
            assert_eq!(out.params, initial);
        }
    }

    #[test]
    fn stray_weights_are_rejected() {
        let (p, tr, dev) = toy_setup(20, 7);
        let w = ClassWeights::uniform(3);
        assert!(train(p, &tr, &dev, &quick_config(), Some(&w)).is_err());
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { num_epochs: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
