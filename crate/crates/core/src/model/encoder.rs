use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{ModelParams, ParamGradients, Pooling};
use crate::encoding::EncodedBatch;
use crate::error::{Error, Result};
use crate::model::params::{LayerWeights, Weights};
use crate::seed;

const NORM_EPS: f64 = 1e-5;

// sqrt(2 / pi)
const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_K: f64 = 0.044_715;

const SITE_EMBEDDING: u64 = 0;
const SITE_POOLED: u64 = u64::MAX;

fn site_attention(layer: usize) -> u64 {
    1 + 2 * layer as u64
}

fn site_feedforward(layer: usize) -> u64 {
    2 + 2 * layer as u64
}

/// Per-class scores, one row per batch row.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Array2<f64>);

impl Logits {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

struct NormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerCache {
    input: Array2<f64>,
    query: Array2<f64>,
    key: Array2<f64>,
    value: Array2<f64>,
    attention: Vec<Array2<f64>>,
    context: Array2<f64>,
    attn_dropout: Option<Array2<f64>>,
    attn_norm: NormCache,
    hidden: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ff_dropout: Option<Array2<f64>>,
    ff_norm: NormCache,
}

struct SampleTrace {
    ids: Vec<usize>,
    positions: Vec<usize>,
    embedding_dropout: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    pooled: Array1<f64>,
    pooled_dropout: Option<Array1<f64>>,
}

/// Activations retained by [`forward`] for [`backward`].
pub struct ForwardTrace {
    fingerprint: u64,
    num_classes: usize,
    samples: Vec<SampleTrace>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.samples.len()
    }

    /// Sequence positions that took part in attention for a batch row.
    pub fn active_positions(&self, row: usize) -> &[usize] {
        &self.samples[row].positions
    }

    /// Attention weights of one head, `active × active`, rows summing to 1.
    pub fn attention(&self, row: usize, layer: usize, head: usize) -> &Array2<f64> {
        &self.samples[row].layers[layer].attention[head]
    }
}

struct DropoutSpec {
    rate: f64,
    seed: u64,
}

impl DropoutSpec {
    fn matrix(&self, site: u64, row: usize, positions: &[usize], width: usize) -> Option<Array2<f64>> {
        if self.rate == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        Some(Array2::from_shape_fn((positions.len(), width), |(r, u)| {
            let x = seed::uniform_at(self.seed, [site, row as u64, positions[r] as u64, u as u64]);
            if x < self.rate {
                0.0
            } else {
                keep
            }
        }))
    }

    fn vector(&self, site: u64, row: usize, width: usize) -> Option<Array1<f64>> {
        self.matrix(site, row, &[0], width)
            .map(|m| m.into_shape_with_order(width).expect("single row"))
    }
}

fn layer_norm(x: &Array2<f64>, scale: &Array1<f64>, offset: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut normalized = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.dot(&row) / d;
        *inv = 1.0 / (var + NORM_EPS).sqrt();
        row *= *inv;
    }
    let out = &normalized * scale + offset;
    (out, NormCache { normalized, inv_std })
}

fn layer_norm_backward(
    grad_out: &Array2<f64>,
    cache: &NormCache,
    scale: &Array1<f64>,
    grad_scale: &mut Array1<f64>,
    grad_offset: &mut Array1<f64>,
) -> Array2<f64> {
    *grad_scale += &(grad_out * &cache.normalized).sum_axis(Axis(0));
    *grad_offset += &grad_out.sum_axis(Axis(0));
    let mut grad = grad_out * scale;
    let d = grad.ncols() as f64;
    for ((mut g, xhat), &inv) in grad
        .rows_mut()
        .into_iter()
        .zip(cache.normalized.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_g = g.sum() / d;
        let mean_gx = g.dot(&xhat) / d;
        g.zip_mut_with(&xhat, |gv, &xv| *gv = inv * (*gv - mean_g - xv * mean_gx));
    }
    grad
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

fn apply_dropout(x: &mut Array2<f64>, mask: &Option<Array2<f64>>) {
    if let Some(m) = mask {
        *x *= m;
    }
}

fn layer_forward(
    w: &LayerWeights,
    x: Array2<f64>,
    heads: usize,
    dropout: &DropoutSpec,
    layer: usize,
    row: usize,
    positions: &[usize],
) -> (Array2<f64>, LayerCache) {
    let n = x.nrows();
    let d = x.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let query = affine(&x, &w.query, &w.query_bias);
    let key = affine(&x, &w.key, &w.key_bias);
    let value = affine(&x, &w.value, &w.value_bias);
    let mut context = Array2::zeros((n, d));
    let mut attention = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = query.slice(cols).dot(&key.slice(cols).t()) * scale;
        softmax_rows(&mut scores);
        context.slice_mut(cols).assign(&scores.dot(&value.slice(cols)));
        attention.push(scores);
    }
    let mut attn_out = affine(&context, &w.output, &w.output_bias);
    let attn_dropout = dropout.matrix(site_attention(layer), row, positions, d);
    apply_dropout(&mut attn_out, &attn_dropout);
    let (hidden, attn_norm) = layer_norm(&(&x + &attn_out), &w.attn_norm_scale, &w.attn_norm_offset);

    let ff_pre = affine(&hidden, &w.ff_in, &w.ff_in_bias);
    let ff_act = ff_pre.mapv(gelu);
    let mut ff_out = affine(&ff_act, &w.ff_out, &w.ff_out_bias);
    let ff_dropout = dropout.matrix(site_feedforward(layer), row, positions, d);
    apply_dropout(&mut ff_out, &ff_dropout);
    let (out, ff_norm) = layer_norm(&(&hidden + &ff_out), &w.ff_norm_scale, &w.ff_norm_offset);

    let cache = LayerCache {
        input: x,
        query,
        key,
        value,
        attention,
        context,
        attn_dropout,
        attn_norm,
        hidden,
        ff_pre,
        ff_act,
        ff_dropout,
        ff_norm,
    };
    (out, cache)
}

fn layer_backward(w: &LayerWeights, g: &mut LayerWeights, cache: &LayerCache, grad_out: &Array2<f64>, heads: usize) -> Array2<f64> {
    let d = grad_out.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let grad_r2 = layer_norm_backward(
        grad_out,
        &cache.ff_norm,
        &w.ff_norm_scale,
        &mut g.ff_norm_scale,
        &mut g.ff_norm_offset,
    );
    let mut grad_ff_out = grad_r2.clone();
    apply_dropout(&mut grad_ff_out, &cache.ff_dropout);
    g.ff_out += &cache.ff_act.t().dot(&grad_ff_out);
    g.ff_out_bias += &grad_ff_out.sum_axis(Axis(0));
    let mut grad_pre = grad_ff_out.dot(&w.ff_out.t());
    grad_pre.zip_mut_with(&cache.ff_pre, |gv, &x| *gv *= gelu_grad(x));
    g.ff_in += &cache.hidden.t().dot(&grad_pre);
    g.ff_in_bias += &grad_pre.sum_axis(Axis(0));
    let grad_hidden = grad_r2 + grad_pre.dot(&w.ff_in.t());

    let grad_r1 = layer_norm_backward(
        &grad_hidden,
        &cache.attn_norm,
        &w.attn_norm_scale,
        &mut g.attn_norm_scale,
        &mut g.attn_norm_offset,
    );
    let mut grad_attn = grad_r1.clone();
    apply_dropout(&mut grad_attn, &cache.attn_dropout);
    g.output += &cache.context.t().dot(&grad_attn);
    g.output_bias += &grad_attn.sum_axis(Axis(0));
    let grad_context = grad_attn.dot(&w.output.t());

    let n = grad_out.nrows();
    let mut grad_q = Array2::zeros((n, d));
    let mut grad_k = Array2::zeros((n, d));
    let mut grad_v = Array2::zeros((n, d));
    for (h, probs) in cache.attention.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let grad_ctx_h = grad_context.slice(cols);
        let grad_probs = grad_ctx_h.dot(&cache.value.slice(cols).t());
        grad_v.slice_mut(cols).assign(&probs.t().dot(&grad_ctx_h));
        // softmax backward, row by row
        let mut grad_scores = probs * &grad_probs;
        let row_dot = grad_scores.sum_axis(Axis(1));
        for ((mut gs, p), &dot) in grad_scores.rows_mut().into_iter().zip(probs.rows()).zip(row_dot.iter()) {
            gs.scaled_add(-dot, &p);
        }
        grad_scores *= scale;
        grad_q.slice_mut(cols).assign(&grad_scores.dot(&cache.key.slice(cols)));
        grad_k.slice_mut(cols).assign(&grad_scores.t().dot(&cache.query.slice(cols)));
    }
    let x_t = cache.input.t();
    g.query += &x_t.dot(&grad_q);
    g.query_bias += &grad_q.sum_axis(Axis(0));
    g.key += &x_t.dot(&grad_k);
    g.key_bias += &grad_k.sum_axis(Axis(0));
    g.value += &x_t.dot(&grad_v);
    g.value_bias += &grad_v.sum_axis(Axis(0));

    grad_r1 + grad_q.dot(&w.query.t()) + grad_k.dot(&w.key.t()) + grad_v.dot(&w.value.t())
}

fn forward_sample(
    params: &ModelParams,
    ids: ArrayView1<usize>,
    mask: ArrayView1<u8>,
    row: usize,
    dropout: &DropoutSpec,
) -> (Array1<f64>, SampleTrace) {
    let config = &params.config;
    let w = &params.weights;
    let positions: Vec<usize> = (0..mask.len()).filter(|&t| mask[t] == 1).collect();
    let active_ids: Vec<usize> = positions.iter().map(|&t| ids[t]).collect();
    let d = config.embed_dim;

    let mut x = Array2::from_shape_fn((positions.len(), d), |(r, c)| {
        w.token_embedding[[active_ids[r], c]] + w.position_embedding[[positions[r], c]]
    });
    let embedding_dropout = dropout.matrix(SITE_EMBEDDING, row, &positions, d);
    apply_dropout(&mut x, &embedding_dropout);

    let mut layers = Vec::with_capacity(config.num_layers);
    for (l, lw) in w.layers.iter().enumerate() {
        let (out, cache) = layer_forward(lw, x, config.num_heads, dropout, l, row, &positions);
        layers.push(cache);
        x = out;
    }

    let mut pooled = match config.pooling {
        Pooling::Cls => x.row(0).to_owned(),
        Pooling::Mean => x.mean_axis(Axis(0)).expect("at least one active position"),
    };
    let pooled_dropout = dropout.vector(SITE_POOLED, row, d);
    if let Some(m) = &pooled_dropout {
        pooled *= m;
    }
    let logits = pooled.dot(&w.head) + &w.head_bias;
    let trace = SampleTrace {
        ids: active_ids,
        positions,
        embedding_dropout,
        layers,
        pooled,
        pooled_dropout,
    };
    (logits, trace)
}

fn check_batch(params: &ModelParams, batch: &EncodedBatch) -> Result<()> {
    let config = &params.config;
    if batch.max_len() != config.max_len {
        return Err(Error::Contract(format!(
            "batch sequence length {} does not match model max_len {}",
            batch.max_len(),
            config.max_len
        )));
    }
    if let Some(&id) = batch.input_ids.iter().find(|&&id| id >= config.vocab_size) {
        return Err(Error::Contract(format!(
            "token id {id} is outside the vocabulary of size {}",
            config.vocab_size
        )));
    }
    if batch.attention_mask.iter().any(|&m| m > 1) {
        return Err(Error::Contract("attention mask entries must be 0 or 1".into()));
    }
    if batch.attention_mask.column(0).iter().any(|&m| m != 1) {
        return Err(Error::Contract("position 0 must be unmasked in every row".into()));
    }
    Ok(())
}

/// Runs the encoder over a batch.
///
/// In `train_mode` with a positive dropout rate, dropout masks are derived
/// from `seed`, the batch row, the position and the unit, so a call is fully
/// reproducible. With `train_mode == false` the seed is ignored.
pub fn forward(params: &ModelParams, batch: &EncodedBatch, train_mode: bool, seed: u64) -> Result<(Logits, ForwardTrace)> {
    check_batch(params, batch)?;
    let dropout = DropoutSpec {
        rate: if train_mode { params.config.dropout_rate } else { 0.0 },
        seed,
    };
    let c = params.config.num_classes;
    let mut logits = Array2::zeros((batch.len(), c));
    let mut samples = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let (z, trace) = forward_sample(
            params,
            batch.input_ids.row(i),
            batch.attention_mask.row(i),
            i,
            &dropout,
        );
        logits.row_mut(i).assign(&z);
        samples.push(trace);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forward pass produced non-finite logits".into()));
    }
    let trace = ForwardTrace {
        fingerprint: params.fingerprint(),
        num_classes: c,
        samples,
    };
    Ok((Logits(logits), trace))
}

/// Eval-mode logits without retaining a trace, processed in chunks.
pub fn infer(params: &ModelParams, batch: &EncodedBatch) -> Result<Logits> {
    const CHUNK: usize = 64;
    check_batch(params, batch)?;
    let mut logits = Array2::zeros((batch.len(), params.config.num_classes));
    let rows: Vec<usize> = (0..batch.len()).collect();
    for chunk in rows.chunks(CHUNK) {
        let (z, _) = forward(params, &batch.select(chunk), false, 0)?;
        for (k, &i) in chunk.iter().enumerate() {
            logits.row_mut(i).assign(&z.0.row(k));
        }
    }
    Ok(Logits(logits))
}

/// Gradients of a scalar loss whose gradient with respect to the logits is
/// `grad_logits`, for every parameter tensor.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, grad_logits: ArrayView2<f64>) -> Result<ParamGradients> {
    if grad_logits.dim() != (trace.batch_size(), trace.num_classes) {
        return Err(Error::Contract(format!(
            "logit gradient has shape {:?}, trace expects ({}, {})",
            grad_logits.dim(),
            trace.batch_size(),
            trace.num_classes
        )));
    }
    if trace.fingerprint != params.fingerprint() {
        return Err(Error::Contract("trace was produced by different parameters".into()));
    }
    let config = &params.config;
    let w = &params.weights;
    let mut grads = ParamGradients::zeros(config);
    let g: &mut Weights = &mut grads.weights;

    for (i, sample) in trace.samples.iter().enumerate() {
        let dz = grad_logits.row(i);
        for (a, &p) in sample.pooled.iter().enumerate() {
            g.head.row_mut(a).scaled_add(p, &dz);
        }
        g.head_bias += &dz;
        let mut grad_pooled = w.head.dot(&dz);
        if let Some(m) = &sample.pooled_dropout {
            grad_pooled *= m;
        }

        let n = sample.positions.len();
        let mut grad_x = Array2::zeros((n, config.embed_dim));
        match config.pooling {
            Pooling::Cls => grad_x.row_mut(0).assign(&grad_pooled),
            Pooling::Mean => {
                let share = grad_pooled / n as f64;
                for mut row in grad_x.rows_mut() {
                    row.assign(&share);
                }
            }
        }
        for (l, cache) in sample.layers.iter().enumerate().rev() {
            grad_x = layer_backward(&w.layers[l], &mut g.layers[l], cache, &grad_x, config.num_heads);
        }
        apply_dropout(&mut grad_x, &sample.embedding_dropout);
        for (r, (&id, &pos)) in sample.ids.iter().zip(&sample.positions).enumerate() {
            let gr = grad_x.row(r);
            g.token_embedding.row_mut(id).scaled_add(1.0, &gr);
            g.position_embedding.row_mut(pos).scaled_add(1.0, &gr);
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{CLS_ID, PAD_ID};
    use crate::model::ModelConfig;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            embed_dim: 8,
            num_heads: 2,
            num_layers: 1,
            feedforward_dim: 16,
            max_len: 6,
            num_classes: 3,
            dropout_rate: 0.0,
            pooling: Pooling::Cls,
        }
    }

    fn batch(rows: &[&[usize]], max_len: usize) -> EncodedBatch {
        let n = rows.len();
        let mut input_ids = Array2::zeros((n, max_len));
        let mut attention_mask = Array2::zeros((n, max_len));
        for (i, r) in rows.iter().enumerate() {
            input_ids[[i, 0]] = CLS_ID;
            attention_mask[[i, 0]] = 1;
            for (t, &id) in r.iter().enumerate() {
                input_ids[[i, t + 1]] = id;
                attention_mask[[i, t + 1]] = 1;
            }
        }
        EncodedBatch {
            input_ids,
            attention_mask,
        }
    }

    #[test]
    fn pad_region_ids_do_not_change_logits() {
        let params = ModelParams::init(&tiny_config(), 1).unwrap();
        let a = batch(&[&[4, 5]], 6);
        let mut b = a.clone();
        b.input_ids[[0, 4]] = 9;
        b.input_ids[[0, 5]] = 11;
        let (za, _) = forward(&params, &a, false, 0).unwrap();
        let (zb, _) = forward(&params, &b, false, 0).unwrap();
        assert_eq!(za, zb);
        assert_eq!(a.input_ids[[0, 4]], PAD_ID);
    }

    #[test]
    fn row_is_independent_of_batch_company() {
        let params = ModelParams::init(&tiny_config(), 2).unwrap();
        let rows: Vec<Vec<usize>> = (0..8).map(|i| vec![3 + i % 9, 4, 5 + i % 3]).collect();
        let refs: Vec<&[usize]> = rows.iter().map(|r| r.as_slice()).collect();
        let (full, _) = forward(&params, &batch(&refs, 6), false, 0).unwrap();
        let (single, _) = forward(&params, &batch(&refs[5..6], 6), false, 0).unwrap();
        assert_eq!(full.0.row(5), single.0.row(0));
    }

    #[test]
    fn zero_layer_forward_is_closed_form() {
        let mut config = tiny_config();
        config.num_layers = 0;
        let params = ModelParams::init(&config, 3).unwrap();
        let (z, _) = forward(&params, &batch(&[&[7, 8]], 6), false, 0).unwrap();
        let w = &params.weights;
        for c in 0..3 {
            let mut expected = w.head_bias[c];
            for a in 0..8 {
                expected += (w.token_embedding[[CLS_ID, a]] + w.position_embedding[[0, a]]) * w.head[[a, c]];
            }
            assert!((z.0[[0, c]] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let params = ModelParams::init(&tiny_config(), 4).unwrap();
        let (_, trace) = forward(&params, &batch(&[&[3, 4, 5], &[6]], 6), false, 0).unwrap();
        for row in 0..2 {
            for h in 0..2 {
                let a = trace.attention(row, 0, h);
                assert_eq!(a.ncols(), trace.active_positions(row).len());
                for r in a.rows() {
                    assert!(r.iter().all(|&p| p >= 0.0));
                    assert!((r.sum() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_dropout_train_mode_matches_eval() {
        let params = ModelParams::init(&tiny_config(), 5).unwrap();
        let b = batch(&[&[3, 4, 5], &[6, 7]], 6);
        let (train, _) = forward(&params, &b, true, 99).unwrap();
        let (eval, _) = forward(&params, &b, false, 0).unwrap();
        assert_eq!(train, eval);
    }

    #[test]
    fn dropout_is_seeded() {
        let mut config = tiny_config();
        config.dropout_rate = 0.3;
        let params = ModelParams::init(&config, 6).unwrap();
        let b = batch(&[&[3, 4, 5]], 6);
        let (a, _) = forward(&params, &b, true, 1).unwrap();
        let (again, _) = forward(&params, &b, true, 1).unwrap();
        let (other, _) = forward(&params, &b, true, 2).unwrap();
        assert_eq!(a, again);
        assert_ne!(a, other);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let params = ModelParams::init(&tiny_config(), 7).unwrap();
        let b = batch(&[&[3, 4], &[5]], 6);
        let (_, trace) = forward(&params, &b, false, 0).unwrap();
        let grads = backward(&params, &trace, Array2::zeros((2, 3)).view()).unwrap();
        assert!(grads.weights.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn head_bias_gradient_sums_over_batch() {
        let params = ModelParams::init(&tiny_config(), 8).unwrap();
        let b = batch(&[&[3, 4], &[5], &[6, 7, 8]], 6);
        let (_, trace) = forward(&params, &b, false, 0).unwrap();
        let dz = Array2::from_shape_fn((3, 3), |(i, j)| (i as f64 + 1.0) * 0.1 - j as f64 * 0.3);
        let grads = backward(&params, &trace, dz.view()).unwrap();
        let expected = dz.sum_axis(Axis(0));
        assert_eq!(grads.weights.head_bias, expected);
    }

    #[test]
    fn stale_trace_and_bad_shapes_are_rejected() {
        let mut params = ModelParams::init(&tiny_config(), 9).unwrap();
        let b = batch(&[&[3, 4]], 6);
        let (_, trace) = forward(&params, &b, false, 0).unwrap();
        assert!(matches!(
            backward(&params, &trace, Array2::zeros((2, 3)).view()),
            Err(Error::Contract(_))
        ));
        params.weights.head[[0, 0]] += 1.0;
        assert!(matches!(
            backward(&params, &trace, Array2::zeros((1, 3)).view()),
            Err(Error::Contract(_))
        ));
        assert!(forward(&params, &batch(&[&[3]], 5), false, 0).is_err());
        assert!(forward(&params, &batch(&[&[30]], 6), false, 0).is_err());
    }

    #[test]
    fn infer_matches_forward() {
        let params = ModelParams::init(&tiny_config(), 10).unwrap();
        let rows: Vec<Vec<usize>> = (0..70).map(|i| vec![3 + i % 9]).collect();
        let refs: Vec<&[usize]> = rows.iter().map(|r| r.as_slice()).collect();
        let b = batch(&refs, 6);
        let (z, _) = forward(&params, &b, false, 0).unwrap();
        assert_eq!(infer(&params, &b).unwrap(), z);
    }
}
