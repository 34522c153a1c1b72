//! Multi-label emotion detection under class imbalance: corpus handling,
//! tokenization, a small transformer encoder trained with (class-weighted)
//! binary cross-entropy, threshold prediction with argmax fallback, and the
//! usual multi-label metrics.

pub mod corpus;
pub mod encoding;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod seed;
pub mod trainer;

pub use ndarray;

pub use corpus::{Dataset, LabelFrequencies, LabelSpace, Record, SynthConfig};
pub use encoding::{EncodedBatch, EncodingConfig, Vocabulary};
pub use error::{Error, Result};
pub use inference::{PredictionPolicy, PredictionSet};
pub use metrics::{ConfusionCounts, MetricsReport};
pub use model::{Logits, ModelConfig, ModelParams, Pooling};
pub use objective::{ClassWeights, Probabilities, SmoothingConfig, WeightScheme};
pub use trainer::{EncodedDataset, TrainConfig, TrainHistory, TrialRecord};
