//! Shared inputs for the benchmarks.

use imbalml::corpus::{generate_synthetic, label_frequencies};
use imbalml::ndarray::Array2;
use imbalml::objective::compute_class_weights;
use imbalml::{
    ClassWeights, Dataset, EncodedBatch, ModelConfig, ModelParams, Probabilities, SynthConfig,
    Vocabulary,
};

pub const PREVALENCE: [f64; 5] = [0.07, 0.43, 0.12, 0.18, 0.2];

pub fn corpus(n: usize, seed: u64) -> Dataset {
    generate_synthetic(&SynthConfig::new(n, PREVALENCE.to_vec()), seed).expect("valid synth config")
}

/// A model and one encoded batch of `rows` texts.
pub struct ModelFixture {
    pub params: ModelParams,
    pub batch: EncodedBatch,
}

pub fn model_fixture(rows: usize, max_len: usize) -> ModelFixture {
    let data = corpus(rows, 1);
    let vocab = Vocabulary::build(data.texts(), 30_000, 1, true).expect("vocabulary");
    let config = ModelConfig::new(vocab.len(), max_len, data.num_classes());
    ModelFixture {
        params: ModelParams::init(&config, 7).expect("valid config"),
        batch: vocab.encode_batch(data.texts(), max_len),
    }
}

/// Deterministic probabilities, targets and inverse-frequency weights.
pub fn loss_inputs(rows: usize) -> (Probabilities, Array2<f64>, ClassWeights) {
    let data = corpus(rows, 2);
    let targets = data.target_matrix();
    let probs = Array2::from_shape_fn(targets.dim(), |(i, j)| {
        ((i * 31 + j * 17) % 97) as f64 / 97.0 + 0.005
    });
    let weights = compute_class_weights(&label_frequencies(&data), data.space().names(), true)
        .expect("weights");
    (Probabilities(probs), targets, weights)
}

/// Predictions that agree with the truth on roughly four cells in five.
pub fn metric_inputs(rows: usize) -> (Array2<u8>, Array2<u8>, Probabilities) {
    let data = corpus(rows, 3);
    let truth = data.label_matrix();
    let pred = Array2::from_shape_fn(truth.dim(), |(i, j)| {
        if (i * 13 + j * 7) % 5 == 0 {
            1 - truth[[i, j]]
        } else {
            truth[[i, j]]
        }
    });
    let probs = Probabilities(
        pred.mapv(|v| if v == 1 { 0.7 } else { 0.2 })
            + Array2::from_shape_fn(truth.dim(), |(i, j)| ((i + j) % 10) as f64 / 100.0),
    );
    (pred, truth, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_matching_shapes() {
        let m = model_fixture(16, 12);
        assert_eq!(m.batch.len(), 16);
        let (p, t, w) = loss_inputs(40);
        assert_eq!(p.0.dim(), t.dim());
        assert_eq!(w.len(), 5);
        let (pred, truth, probs) = metric_inputs(40);
        assert_eq!(pred.dim(), truth.dim());
        assert_eq!(probs.0.dim(), truth.dim());
    }
}
