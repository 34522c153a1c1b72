use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};

use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{train_observed, EncodedDataset, EpochControl, TrainConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::seed;

/// Ranges sampled by the random search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    /// Log-uniform learning-rate range.
    pub lr_min: f64,
    pub lr_max: f64,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            lr_min: 1e-5,
            lr_max: 1e-4,
            batch_sizes: vec![4, 8, 16],
            epochs: vec![3, 4, 5],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min.is_finite() && self.lr_max.is_finite() && self.lr_min <= self.lr_max) {
            return Err(Error::InvalidArgument(format!(
                "learning-rate range [{}, {}] must be positive and ordered",
                self.lr_min, self.lr_max
            )));
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(Error::InvalidArgument("batch_sizes must be nonempty and positive".into()));
        }
        if self.epochs.is_empty() || self.epochs.contains(&0) {
            return Err(Error::InvalidArgument("epochs must be nonempty and positive".into()));
        }
        Ok(())
    }

    fn apply(base: &TrainConfig, lr: f64, batch_size: usize, num_epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            batch_size,
            num_epochs,
            ..base.clone()
        }
    }

    pub fn sample(&self, base: &TrainConfig, rng: &mut impl Rng) -> TrainConfig {
        let (lo, hi) = (self.lr_min.ln(), self.lr_max.ln());
        let lr = (lo + rng.random::<f64>() * (hi - lo)).exp();
        let batch = self.batch_sizes[rng.random_range(0..self.batch_sizes.len())];
        let epochs = self.epochs[rng.random_range(0..self.epochs.len())];
        Self::apply(base, lr, batch, epochs)
    }

    /// Every combination of `lr_points` learning rates with each batch size and
    /// epoch count. The rates sit at the centres of equal slices of the log
    /// range.
    pub fn grid(&self, base: &TrainConfig, lr_points: usize) -> Vec<TrainConfig> {
        let (lo, hi) = (self.lr_min.ln(), self.lr_max.ln());
        let mut out = Vec::new();
        for k in 0..lr_points {
            let lr = (lo + (k as f64 + 0.5) / lr_points as f64 * (hi - lo)).exp();
            for &b in &self.batch_sizes {
                for &e in &self.epochs {
                    out.push(Self::apply(base, lr, b, e));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: usize,
    pub config: TrainConfig,
    /// Best dev Macro F1 over the epochs the trial ran.
    pub dev_macro_f1: f64,
    pub status: TrialStatus,
    pub pruned_epoch: Option<usize>,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub budget: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    pub prune: bool,
    /// Trials with a lower id are never pruned.
    pub startup_trials: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            budget: 10,
            seed: 42,
            workers: 0,
            prune: true,
            startup_trials: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: TrainConfig,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
}

/// Seeded random search with median pruning. After each epoch but the last,
/// trial `k` (past the startup trials) is pruned when its dev Macro F1 falls
/// below the median of the values trials `0..k` reported at that epoch.
/// Trials run in parallel, but each waits for the earlier trials' reports, so
/// the outcome depends only on the inputs.
pub fn tune(
    space: &SearchSpace,
    options: &TuneOptions,
    base: &TrainConfig,
    init: &ModelParams,
    train_data: &EncodedDataset,
    dev_data: &EncodedDataset,
) -> Result<TuneOutcome> {
    space.validate()?;
    if options.budget == 0 {
        return Err(Error::InvalidArgument("tuning budget must be at least 1".into()));
    }
    let mut rng = seed::rng(seed::derive(options.seed, "tune"));
    let configs: Vec<TrainConfig> = (0..options.budget).map(|_| space.sample(base, &mut rng)).collect();
    let pruning = options.prune.then_some(options.startup_trials);
    let trials = run_trials(&configs, init, train_data, dev_data, options.workers, pruning)?;

    let pick = |status: TrialStatus| {
        trials
            .iter()
            .filter(|t| t.status == status)
            .fold(None::<&TrialRecord>, |best, t| match best {
                Some(b) if b.dev_macro_f1 >= t.dev_macro_f1 => Some(b),
                _ => Some(t),
            })
    };
    let best = match pick(TrialStatus::Completed) {
        Some(t) => t,
        None => {
            warn!("every trial was pruned; returning the best pruned trial");
            pick(TrialStatus::Pruned).expect("budget is at least one")
        }
    };
    Ok(TuneOutcome {
        best: best.config.clone(),
        best_trial: best.id,
        trials,
    })
}

/// Trains every config to completion without pruning.
pub fn evaluate_configs(
    configs: &[TrainConfig],
    init: &ModelParams,
    train_data: &EncodedDataset,
    dev_data: &EncodedDataset,
    workers: usize,
) -> Result<Vec<TrialRecord>> {
    run_trials(configs, init, train_data, dev_data, workers, None)
}

struct Board {
    reports: Vec<Vec<f64>>,
    done: Vec<bool>,
}

struct Shared {
    board: Mutex<Board>,
    changed: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Board> {
        self.board.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Marks a trial finished even if it errors or panics, so later trials never
/// wait on it forever.
struct DoneGuard<'a> {
    shared: &'a Shared,
    id: usize,
}

impl Drop for DoneGuard<'_> {
    fn drop(&mut self) {
        self.shared.lock().done[self.id] = true;
        self.shared.changed.notify_all();
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

fn run_trials(
    configs: &[TrainConfig],
    init: &ModelParams,
    train_data: &EncodedDataset,
    dev_data: &EncodedDataset,
    workers: usize,
    pruning: Option<usize>,
) -> Result<Vec<TrialRecord>> {
    for c in configs {
        c.validate()?;
    }
    let k = configs.len();
    let workers = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    }
    .clamp(1, k.max(1));
    let shared = Shared {
        board: Mutex::new(Board {
            reports: vec![Vec::new(); k],
            done: vec![false; k],
        }),
        changed: Condvar::new(),
    };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<TrialRecord>>>> = Mutex::new((0..k).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let id = next.fetch_add(1, Ordering::SeqCst);
                if id >= k {
                    break;
                }
                let _guard = DoneGuard { shared: &shared, id };
                let record = run_one(id, &configs[id], init, train_data, dev_data, &shared, pruning);
                results.lock().unwrap_or_else(|e| e.into_inner())[id] = Some(record);
            });
        }
    });

    results
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err(Error::Contract("a tuning worker panicked".into()))))
        .collect()
}

fn run_one(
    id: usize,
    config: &TrainConfig,
    init: &ModelParams,
    train_data: &EncodedDataset,
    dev_data: &EncodedDataset,
    shared: &Shared,
    pruning: Option<usize>,
) -> Result<TrialRecord> {
    let mut pruned_epoch = None;
    let outcome = train_observed(init.clone(), train_data, dev_data, config, None, |epoch, f1| {
        let mut board = shared.lock();
        board.reports[id].push(f1);
        shared.changed.notify_all();
        let Some(startup_trials) = pruning else {
            return EpochControl::Continue;
        };
        if id < startup_trials || epoch >= config.num_epochs {
            return EpochControl::Continue;
        }
        while (0..id).any(|j| !board.done[j] && board.reports[j].len() < epoch) {
            board = shared.changed.wait(board).unwrap_or_else(|e| e.into_inner());
        }
        let mut earlier: Vec<f64> = (0..id).filter_map(|j| board.reports[j].get(epoch - 1).copied()).collect();
        if !earlier.is_empty() && f1 < median(&mut earlier) {
            pruned_epoch = Some(epoch);
            return EpochControl::Halt;
        }
        EpochControl::Continue
    })?;
    let record = TrialRecord {
        id,
        config: config.clone(),
        dev_macro_f1: outcome.history.best_dev_macro_f1,
        status: if pruned_epoch.is_some() {
            TrialStatus::Pruned
        } else {
            TrialStatus::Completed
        },
        pruned_epoch,
        epochs_run: outcome.history.epochs.len(),
    };
    info!(
        "trial {id}: lr {:.3e}, batch {}, epochs {} -> dev macro F1 {:.4}{}",
        config.learning_rate,
        config.batch_size,
        config.num_epochs,
        record.dev_macro_f1,
        pruned_epoch.map_or(String::new(), |e| format!(" (pruned after epoch {e})"))
    );
    Ok(record)
}
