use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::seed;

/// Weights of one post-norm encoder layer. Matrices map row vectors,
/// `y = x · W + b`, so `W` is `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub query: Array2<f64>,
    pub query_bias: Array1<f64>,
    pub key: Array2<f64>,
    pub key_bias: Array1<f64>,
    pub value: Array2<f64>,
    pub value_bias: Array1<f64>,
    pub output: Array2<f64>,
    pub output_bias: Array1<f64>,
    pub attn_norm_scale: Array1<f64>,
    pub attn_norm_offset: Array1<f64>,
    pub ff_in: Array2<f64>,
    pub ff_in_bias: Array1<f64>,
    pub ff_out: Array2<f64>,
    pub ff_out_bias: Array1<f64>,
    pub ff_norm_scale: Array1<f64>,
    pub ff_norm_offset: Array1<f64>,
}

/// The full tensor bundle. Shared by parameters, gradients and optimizer
/// moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<LayerWeights>,
    pub head: Array2<f64>,
    pub head_bias: Array1<f64>,
}

/// A named view of one tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub data: &'a mut [f64],
}

impl LayerWeights {
    fn zeros(config: &ModelConfig) -> Self {
        let d = config.embed_dim;
        let ff = config.feedforward_dim;
        Self {
            query: Array2::zeros((d, d)),
            query_bias: Array1::zeros(d),
            key: Array2::zeros((d, d)),
            key_bias: Array1::zeros(d),
            value: Array2::zeros((d, d)),
            value_bias: Array1::zeros(d),
            output: Array2::zeros((d, d)),
            output_bias: Array1::zeros(d),
            attn_norm_scale: Array1::zeros(d),
            attn_norm_offset: Array1::zeros(d),
            ff_in: Array2::zeros((d, ff)),
            ff_in_bias: Array1::zeros(ff),
            ff_out: Array2::zeros((ff, d)),
            ff_out_bias: Array1::zeros(d),
            ff_norm_scale: Array1::zeros(d),
            ff_norm_offset: Array1::zeros(d),
        }
    }

    /// Tensors in a fixed order: the four attention projections and their
    /// biases, the attention norm, the feedforward block, the feedforward norm.
    fn named(&self) -> [(&'static str, Vec<usize>, &[f64]); 16] {
        fn m(a: &Array2<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn v(a: &Array1<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let entries = [
            ("query", m(&self.query)),
            ("query_bias", v(&self.query_bias)),
            ("key", m(&self.key)),
            ("key_bias", v(&self.key_bias)),
            ("value", m(&self.value)),
            ("value_bias", v(&self.value_bias)),
            ("output", m(&self.output)),
            ("output_bias", v(&self.output_bias)),
            ("attn_norm_scale", v(&self.attn_norm_scale)),
            ("attn_norm_offset", v(&self.attn_norm_offset)),
            ("ff_in", m(&self.ff_in)),
            ("ff_in_bias", v(&self.ff_in_bias)),
            ("ff_out", m(&self.ff_out)),
            ("ff_out_bias", v(&self.ff_out_bias)),
            ("ff_norm_scale", v(&self.ff_norm_scale)),
            ("ff_norm_offset", v(&self.ff_norm_offset)),
        ];
        entries.map(|(name, (shape, data))| (name, shape, data))
    }

    fn named_mut(&mut self) -> [(&'static str, &mut [f64]); 16] {
        let LayerWeights {
            query,
            query_bias,
            key,
            key_bias,
            value,
            value_bias,
            output,
            output_bias,
            attn_norm_scale,
            attn_norm_offset,
            ff_in,
            ff_in_bias,
            ff_out,
            ff_out_bias,
            ff_norm_scale,
            ff_norm_offset,
        } = self;
        [
            ("query", query.as_slice_mut().expect("standard layout")),
            ("query_bias", query_bias.as_slice_mut().expect("standard layout")),
            ("key", key.as_slice_mut().expect("standard layout")),
            ("key_bias", key_bias.as_slice_mut().expect("standard layout")),
            ("value", value.as_slice_mut().expect("standard layout")),
            ("value_bias", value_bias.as_slice_mut().expect("standard layout")),
            ("output", output.as_slice_mut().expect("standard layout")),
            ("output_bias", output_bias.as_slice_mut().expect("standard layout")),
            ("attn_norm_scale", attn_norm_scale.as_slice_mut().expect("standard layout")),
            ("attn_norm_offset", attn_norm_offset.as_slice_mut().expect("standard layout")),
            ("ff_in", ff_in.as_slice_mut().expect("standard layout")),
            ("ff_in_bias", ff_in_bias.as_slice_mut().expect("standard layout")),
            ("ff_out", ff_out.as_slice_mut().expect("standard layout")),
            ("ff_out_bias", ff_out_bias.as_slice_mut().expect("standard layout")),
            ("ff_norm_scale", ff_norm_scale.as_slice_mut().expect("standard layout")),
            ("ff_norm_offset", ff_norm_offset.as_slice_mut().expect("standard layout")),
        ]
    }
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("weights are stored in standard layout")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("weights are stored in standard layout")
}

impl Weights {
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.embed_dim;
        Self {
            token_embedding: Array2::zeros((config.vocab_size, d)),
            position_embedding: Array2::zeros((config.max_len, d)),
            layers: (0..config.num_layers).map(|_| LayerWeights::zeros(config)).collect(),
            head: Array2::zeros((d, config.num_classes)),
            head_bias: Array1::zeros(config.num_classes),
        }
    }

    /// Every tensor in a fixed order with a stable dotted name.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::with_capacity(4 + 16 * self.layers.len());
        out.push(TensorRef {
            name: "token_embedding".into(),
            shape: self.token_embedding.shape().to_vec(),
            data: slice2(&self.token_embedding),
        });
        out.push(TensorRef {
            name: "position_embedding".into(),
            shape: self.position_embedding.shape().to_vec(),
            data: slice2(&self.position_embedding),
        });
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, shape, data) in layer.named() {
                out.push(TensorRef {
                    name: format!("layers.{l}.{name}"),
                    shape,
                    data,
                });
            }
        }
        out.push(TensorRef {
            name: "head".into(),
            shape: self.head.shape().to_vec(),
            data: slice2(&self.head),
        });
        out.push(TensorRef {
            name: "head_bias".into(),
            shape: self.head_bias.shape().to_vec(),
            data: slice1(&self.head_bias),
        });
        out
    }

    /// Mutable views in the same order as [`Weights::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let Weights {
            token_embedding,
            position_embedding,
            layers,
            head,
            head_bias,
        } = self;
        let mut out = Vec::with_capacity(4 + 16 * layers.len());
        out.push(TensorMut {
            name: "token_embedding".into(),
            data: token_embedding.as_slice_mut().expect("standard layout"),
        });
        out.push(TensorMut {
            name: "position_embedding".into(),
            data: position_embedding.as_slice_mut().expect("standard layout"),
        });
        for (l, layer) in layers.iter_mut().enumerate() {
            for (name, data) in layer.named_mut() {
                out.push(TensorMut {
                    name: format!("layers.{l}.{name}"),
                    data,
                });
            }
        }
        out.push(TensorMut {
            name: "head".into(),
            data: head.as_slice_mut().expect("standard layout"),
        });
        out.push(TensorMut {
            name: "head_bias".into(),
            data: head_bias.as_slice_mut().expect("standard layout"),
        });
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Order-sensitive hash of every value, used to tie traces to parameters.
    pub fn fingerprint(&self) -> u64 {
        self.tensors().iter().fold(0x5EED_u64, |acc, t| {
            t.data
                .iter()
                .fold(seed::mix64(acc ^ t.data.len() as u64), |h, v| {
                    seed::mix64(h ^ v.to_bits())
                })
        })
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = Weights::zeros(config);
        let (a, b) = (self.tensors(), expected.tensors());
        if a.len() != b.len() {
            return Err(Error::Contract(format!(
                "expected {} tensors, found {}",
                b.len(),
                a.len()
            )));
        }
        for (got, want) in a.iter().zip(&b) {
            if got.name != want.name || got.shape != want.shape {
                return Err(Error::Contract(format!(
                    "tensor {} has shape {:?}, expected {} with shape {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
        }
        Ok(())
    }
}

/// Learnable parameters of the encoder classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub weights: Weights,
}

/// Gradients, shape-congruent with [`ModelParams::weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub weights: Weights,
}

impl ParamGradients {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            weights: Weights::zeros(config),
        }
    }
}

fn xavier(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng))
}

fn normal(rng: &mut impl Rng, shape: (usize, usize), std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn(shape, || dist.sample(rng))
}

const EMBEDDING_STD: f64 = 0.1;

impl ModelParams {
    /// Seeded initialization: normal embeddings, Xavier-uniform projections,
    /// zero biases, unit norm scales and zero norm offsets.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(seed, "init"));
        let d = config.embed_dim;
        let ff = config.feedforward_dim;
        let mut weights = Weights::zeros(config);
        weights.token_embedding = normal(&mut rng, (config.vocab_size, d), EMBEDDING_STD);
        weights.position_embedding = normal(&mut rng, (config.max_len, d), EMBEDDING_STD);
        for layer in &mut weights.layers {
            layer.query = xavier(&mut rng, d, d);
            layer.key = xavier(&mut rng, d, d);
            layer.value = xavier(&mut rng, d, d);
            layer.output = xavier(&mut rng, d, d);
            layer.ff_in = xavier(&mut rng, d, ff);
            layer.ff_out = xavier(&mut rng, ff, d);
            layer.attn_norm_scale.fill(1.0);
            layer.ff_norm_scale.fill(1.0);
        }
        weights.head = xavier(&mut rng, d, config.num_classes);
        Ok(Self {
            config: config.clone(),
            weights,
        })
    }

    pub fn fingerprint(&self) -> u64 {
        self.weights.fingerprint()
    }
}
