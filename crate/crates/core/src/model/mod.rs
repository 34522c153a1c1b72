//! Compact transformer encoder classifier with hand-written backward pass.
//!
//! ```text
//! x      = token_embedding[ids] + position_embedding[t]
//! layer  : h = LN(x + Dropout(MultiHeadAttention(x)))
//!          x = LN(h + Dropout(GELU(h · W1 + b1) · W2 + b2))
//! pooled = x[CLS]                 (or the masked mean of x)
//! logits = Dropout(pooled) · W_head + b_head
//! ```
//!
//! Attention only runs over positions whose mask is 1. Masked keys would
//! receive a score of −∞ and an attention weight of exactly 0, and masked
//! query rows never reach the pooled output, so they are skipped outright.

mod checkpoint;
mod encoder;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, sidecar_path, write_checkpoint, CHECKPOINT_VERSION};
pub use encoder::{backward, forward, infer, ForwardTrace, Logits};
pub use params::{LayerWeights, ModelParams, ParamGradients, TensorMut, TensorRef, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Cls,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub feedforward_dim: usize,
    pub max_len: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub pooling: Pooling,
}

impl ModelConfig {
    /// Two layers, width 64, four heads, feedforward 128.
    pub fn new(vocab_size: usize, max_len: usize, num_classes: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 64,
            num_heads: 4,
            num_layers: 2,
            feedforward_dim: 128,
            max_len,
            num_classes,
            dropout_rate: 0.1,
            pooling: Pooling::Cls,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("num_heads", self.num_heads),
            ("feedforward_dim", self.feedforward_dim),
            ("max_len", self.max_len),
            ("num_classes", self.num_classes),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::InvalidArgument(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}
