//! Forward computation: embedding sum, post-norm encoder layers, tanh pooler,
//! dropout, linear classifier, softmax and argmax.
//!
//! Everything runs in f64. The forward in train mode records a [`ForwardCache`]
//! with all activations the backward pass needs; eval mode is a pure function
//! of the input and parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodedInput;
use crate::error::{DocreError, Result};
use crate::math::{affine, dot, gelu, log_softmax_at, softmax, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub n_segments: usize,
    pub n_relations: usize,
    pub dropout_p: f64,
    pub layernorm_eps: f64,
}

impl ModelConfig {
    pub fn new(d_model: usize, n_layers: usize, n_heads: usize, d_ff: usize) -> Self {
        ModelConfig {
            d_model,
            n_layers,
            n_heads,
            d_ff,
            vocab_size: 0,
            max_len: 512,
            n_segments: 2,
            n_relations: 2,
            dropout_p: 0.3,
            layernorm_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return Err(DocreError::Config("model dimensions must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(DocreError::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(DocreError::Config("dropout_p must be in [0, 1)".into()));
        }
        if self.n_relations < 2 {
            return Err(DocreError::Config("need at least two relation classes".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Default encoder depth; desk-scale tests use 2.
pub const DEFAULT_N_LAYERS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w_q: Tensor,
    pub b_q: Tensor,
    pub w_k: Tensor,
    pub b_k: Tensor,
    pub w_v: Tensor,
    pub b_v: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub token_embed: Tensor,    // vocab_size × d_model
    pub position_embed: Tensor, // max_len × d_model
    pub segment_embed: Tensor,  // n_segments × d_model
    pub layers: Vec<LayerParams>,
    pub pooler_w: Tensor, // d_model × d_model
    pub pooler_b: Tensor,
    pub classifier_w: Tensor, // n_relations × d_model
    pub classifier_b: Tensor,
}

const INIT_STD: f64 = 0.02;

impl Parameters {
    /// BERT-style init: truncated normal for weights, zeros for biases,
    /// ones for LayerNorm gains.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        Self::build(config, |shape| {
            Tensor::randn_truncated(shape, INIT_STD, rng)
        })
    }

    /// All-zero weights (LayerNorm gains still start at one).
    pub fn zeros(config: &ModelConfig) -> Self {
        Self::build(config, Tensor::zeros)
    }

    fn build<F: FnMut(&[usize]) -> Tensor>(config: &ModelConfig, mut w: F) -> Self {
        let d = config.d_model;
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                w_q: w(&[d, d]),
                b_q: Tensor::zeros(&[d]),
                w_k: w(&[d, d]),
                b_k: Tensor::zeros(&[d]),
                w_v: w(&[d, d]),
                b_v: Tensor::zeros(&[d]),
                w_o: w(&[d, d]),
                b_o: Tensor::zeros(&[d]),
                ffn_w1: w(&[d, config.d_ff]),
                ffn_b1: Tensor::zeros(&[config.d_ff]),
                ffn_w2: w(&[config.d_ff, d]),
                ffn_b2: Tensor::zeros(&[d]),
                ln1_gain: Tensor::ones(&[d]),
                ln1_bias: Tensor::zeros(&[d]),
                ln2_gain: Tensor::ones(&[d]),
                ln2_bias: Tensor::zeros(&[d]),
            })
            .collect();
        Parameters {
            token_embed: w(&[config.vocab_size, d]),
            position_embed: w(&[config.max_len, d]),
            segment_embed: w(&[config.n_segments, d]),
            layers,
            pooler_w: w(&[d, d]),
            pooler_b: Tensor::zeros(&[d]),
            classifier_w: w(&[config.n_relations, d]),
            classifier_b: Tensor::zeros(&[config.n_relations]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, t| t.fill(0.0));
        z
    }

    /// Visits every tensor with its checkpoint name, in a fixed order.
    pub fn visit<F: FnMut(&str, &Tensor)>(&self, mut f: F) {
        f("e_w", &self.token_embed);
        f("e_p", &self.position_embed);
        f("e_t", &self.segment_embed);
        for (i, l) in self.layers.iter().enumerate() {
            f(&format!("layer.{i}.w_q"), &l.w_q);
            f(&format!("layer.{i}.b_q"), &l.b_q);
            f(&format!("layer.{i}.w_k"), &l.w_k);
            f(&format!("layer.{i}.b_k"), &l.b_k);
            f(&format!("layer.{i}.w_v"), &l.w_v);
            f(&format!("layer.{i}.b_v"), &l.b_v);
            f(&format!("layer.{i}.w_o"), &l.w_o);
            f(&format!("layer.{i}.b_o"), &l.b_o);
            f(&format!("layer.{i}.ffn_w1"), &l.ffn_w1);
            f(&format!("layer.{i}.ffn_b1"), &l.ffn_b1);
            f(&format!("layer.{i}.ffn_w2"), &l.ffn_w2);
            f(&format!("layer.{i}.ffn_b2"), &l.ffn_b2);
            f(&format!("layer.{i}.ln1_gain"), &l.ln1_gain);
            f(&format!("layer.{i}.ln1_bias"), &l.ln1_bias);
            f(&format!("layer.{i}.ln2_gain"), &l.ln2_gain);
            f(&format!("layer.{i}.ln2_bias"), &l.ln2_bias);
        }
        f("pooler.w", &self.pooler_w);
        f("pooler.b", &self.pooler_b);
        f("classifier.w", &self.classifier_w);
        f("classifier.b", &self.classifier_b);
    }

    pub fn visit_mut<F: FnMut(&str, &mut Tensor)>(&mut self, mut f: F) {
        f("e_w", &mut self.token_embed);
        f("e_p", &mut self.position_embed);
        f("e_t", &mut self.segment_embed);
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(&format!("layer.{i}.w_q"), &mut l.w_q);
            f(&format!("layer.{i}.b_q"), &mut l.b_q);
            f(&format!("layer.{i}.w_k"), &mut l.w_k);
            f(&format!("layer.{i}.b_k"), &mut l.b_k);
            f(&format!("layer.{i}.w_v"), &mut l.w_v);
            f(&format!("layer.{i}.b_v"), &mut l.b_v);
            f(&format!("layer.{i}.w_o"), &mut l.w_o);
            f(&format!("layer.{i}.b_o"), &mut l.b_o);
            f(&format!("layer.{i}.ffn_w1"), &mut l.ffn_w1);
            f(&format!("layer.{i}.ffn_b1"), &mut l.ffn_b1);
            f(&format!("layer.{i}.ffn_w2"), &mut l.ffn_w2);
            f(&format!("layer.{i}.ffn_b2"), &mut l.ffn_b2);
            f(&format!("layer.{i}.ln1_gain"), &mut l.ln1_gain);
            f(&format!("layer.{i}.ln1_bias"), &mut l.ln1_bias);
            f(&format!("layer.{i}.ln2_gain"), &mut l.ln2_gain);
            f(&format!("layer.{i}.ln2_bias"), &mut l.ln2_bias);
        }
        f("pooler.w", &mut self.pooler_w);
        f("pooler.b", &mut self.pooler_b);
        f("classifier.w", &mut self.classifier_w);
        f("classifier.b", &mut self.classifier_b);
    }

    /// True when every tensor name starting with `layer.` or `e_` marks an
    /// encoder-side tensor (frozen under freeze_encoder).
    pub fn is_encoder_tensor(name: &str) -> bool {
        name.starts_with("layer.") || name.starts_with("e_")
    }

    /// All tensors in visit order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.token_embed, &self.position_embed, &self.segment_embed];
        for l in &self.layers {
            out.extend([
                &l.w_q, &l.b_q, &l.w_k, &l.b_k, &l.w_v, &l.b_v, &l.w_o, &l.b_o,
                &l.ffn_w1, &l.ffn_b1, &l.ffn_w2, &l.ffn_b2,
                &l.ln1_gain, &l.ln1_bias, &l.ln2_gain, &l.ln2_bias,
            ]);
        }
        out.extend([&self.pooler_w, &self.pooler_b, &self.classifier_w, &self.classifier_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.token_embed,
            &mut self.position_embed,
            &mut self.segment_embed,
        ];
        for l in &mut self.layers {
            out.extend([
                &mut l.w_q, &mut l.b_q, &mut l.w_k, &mut l.b_k,
                &mut l.w_v, &mut l.b_v, &mut l.w_o, &mut l.b_o,
                &mut l.ffn_w1, &mut l.ffn_b1, &mut l.ffn_w2, &mut l.ffn_b2,
                &mut l.ln1_gain, &mut l.ln1_bias, &mut l.ln2_gain, &mut l.ln2_bias,
            ]);
        }
        out.extend([
            &mut self.pooler_w,
            &mut self.pooler_b,
            &mut self.classifier_w,
            &mut self.classifier_b,
        ]);
        out
    }
}

/// Per-row LayerNorm activations kept for backward.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    /// x̂ = (x − μ)·inv_std, per row.
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Tensor,
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
    /// Per-head attention probabilities, each L×L.
    pub attn_probs: Vec<Tensor>,
    /// Concatenated head outputs before the output projection.
    pub attn_concat: Tensor,
    pub resid1: Tensor,
    pub ln1: LayerNormCache,
    /// H″, input to the FFN.
    pub h2: Tensor,
    pub ffn_pre: Tensor,
    pub ffn_act: Tensor,
    pub resid2: Tensor,
    pub ln2: LayerNormCache,
}

/// Activations recorded by a train-mode forward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: EncodedInput,
    pub embedded: Tensor,
    pub layers: Vec<LayerCache>,
    /// Final hidden state of the [CLS] position (row 0 after the last layer).
    pub final_cls: Vec<f64>,
    /// Pooled [CLS] vector after tanh.
    pub pooled: Vec<f64>,
    /// Inverted-dropout mask, entries 0 or 1/(1−p).
    pub dropout_mask: Vec<f64>,
    pub dropped: Vec<f64>,
    pub logits: Vec<f64>,
}

/// H0[i] = E_w[token] + E_p[position] + E_t[segment].
pub fn embed(input: &EncodedInput, params: &Parameters) -> Result<Tensor> {
    let d = params.token_embed.cols();
    let len = input.token_ids.len();
    let mut h = Tensor::zeros(&[len, d]);
    for i in 0..len {
        let (tok, pos, seg) = (
            input.token_ids[i],
            input.position_ids[i],
            input.segment_ids[i] as usize,
        );
        if tok >= params.token_embed.rows() {
            return Err(DocreError::Input(format!("token id {tok} out of range")));
        }
        if pos >= params.position_embed.rows() {
            return Err(DocreError::Input(format!("position id {pos} out of range")));
        }
        if seg >= params.segment_embed.rows() {
            return Err(DocreError::Input(format!("segment id {seg} out of range")));
        }
        let row = h.row_mut(i);
        for (x, ((a, b), c)) in row.iter_mut().zip(
            params
                .token_embed
                .row(tok)
                .iter()
                .zip(params.position_embed.row(pos))
                .zip(params.segment_embed.row(seg)),
        ) {
            *x = a + b + c;
        }
    }
    Ok(h)
}

/// Row-wise LayerNorm with biased variance; returns the output and cache.
pub fn layer_norm(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
    eps: f64,
) -> (Tensor, LayerNormCache) {
    let (rows, d) = (x.rows(), x.cols());
    let mut out = Tensor::zeros(&[rows, d]);
    let mut normalized = Tensor::zeros(&[rows, d]);
    let mut inv_stds = Vec::with_capacity(rows);
    for i in 0..rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv_std = 1.0 / (var + eps).sqrt();
        inv_stds.push(inv_std);
        let n_row = normalized.row_mut(i);
        for (j, &v) in row.iter().enumerate() {
            n_row[j] = (v - mean) * inv_std;
        }
        let o_row = out.row_mut(i);
        let n_row = normalized.row(i);
        for j in 0..d {
            o_row[j] = n_row[j] * gain.data[j] + bias.data[j];
        }
    }
    (
        out,
        LayerNormCache {
            normalized,
            inv_std: inv_stds,
        },
    )
}

/// One post-norm encoder layer:
/// H′ = MHA(H) + H; H″ = LayerNorm(H′); out = LayerNorm(FFN(H″) + H″).
pub fn encoder_layer(
    h: &Tensor,
    layer: &LayerParams,
    mask: &[u8],
    config: &ModelConfig,
) -> (Tensor, LayerCache) {
    let len = h.rows();
    let d = config.d_model;
    let dk = config.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();

    let mut q = h.matmul(&layer.w_q);
    q.add_row_bias(&layer.b_q.data);
    let mut k = h.matmul(&layer.w_k);
    k.add_row_bias(&layer.b_k.data);
    let mut v = h.matmul(&layer.w_v);
    v.add_row_bias(&layer.b_v.data);

    let mut attn_concat = Tensor::zeros(&[len, d]);
    let mut attn_probs = Vec::with_capacity(config.n_heads);
    for head in 0..config.n_heads {
        let off = head * dk;
        let mut probs = Tensor::zeros(&[len, len]);
        for i in 0..len {
            let q_i = &q.row(i)[off..off + dk];
            let mut scores = Vec::with_capacity(len);
            for (j, &m) in mask.iter().enumerate() {
                let s = if m == 0 {
                    f64::NEG_INFINITY
                } else {
                    dot(q_i, &k.row(j)[off..off + dk]) * scale
                };
                scores.push(s);
            }
            probs.row_mut(i).copy_from_slice(&softmax(&scores));
        }
        for i in 0..len {
            let out_row = attn_concat.row_mut(i);
            let p_row = probs.row(i);
            for (j, &p) in p_row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let v_j = &v.row(j)[off..off + dk];
                for (x, &vv) in out_row[off..off + dk].iter_mut().zip(v_j) {
                    *x += p * vv;
                }
            }
        }
        attn_probs.push(probs);
    }

    let mut attn_out = attn_concat.matmul(&layer.w_o);
    attn_out.add_row_bias(&layer.b_o.data);

    let mut resid1 = attn_out;
    resid1.add_assign(h);
    let (h2, ln1) = layer_norm(&resid1, &layer.ln1_gain, &layer.ln1_bias, config.layernorm_eps);

    let mut ffn_pre = h2.matmul(&layer.ffn_w1);
    ffn_pre.add_row_bias(&layer.ffn_b1.data);
    let ffn_act = Tensor::from_vec(&ffn_pre.shape, ffn_pre.data.iter().map(|&x| gelu(x)).collect());
    let mut ffn_out = ffn_act.matmul(&layer.ffn_w2);
    ffn_out.add_row_bias(&layer.ffn_b2.data);

    let mut resid2 = ffn_out;
    resid2.add_assign(&h2);
    let (out, ln2) = layer_norm(&resid2, &layer.ln2_gain, &layer.ln2_bias, config.layernorm_eps);

    let cache = LayerCache {
        input: h.clone(),
        q,
        k,
        v,
        attn_probs,
        attn_concat,
        resid1,
        ln1,
        h2,
        ffn_pre,
        ffn_act,
        resid2,
        ln2,
    };
    (out, cache)
}

/// C = tanh(W_p · H[0] + b_p); only the [CLS] state is consumed.
pub fn pool(h: &Tensor, params: &Parameters) -> Vec<f64> {
    affine(&params.pooler_w, h.row(0), &params.pooler_b.data)
        .into_iter()
        .map(f64::tanh)
        .collect()
}

/// Inverted-dropout mask: 0 with probability p, else 1/(1−p).
pub fn dropout_mask<R: Rng>(len: usize, p: f64, rng: &mut R) -> Vec<f64> {
    if p == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// logits = W_r · dropout(C) + b_r. Eval mode applies no dropout.
pub fn classify(pooled: &[f64], params: &Parameters, mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        Some(m) => {
            let dropped: Vec<f64> = pooled.iter().zip(m).map(|(c, k)| c * k).collect();
            affine(&params.classifier_w, &dropped, &params.classifier_b.data)
        }
        None => affine(&params.classifier_w, pooled, &params.classifier_b.data),
    }
}

/// Softmax probabilities and the argmax id (smallest index on ties).
pub fn predict(logits: &[f64]) -> Result<(usize, Vec<f64>)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(DocreError::Numeric("non-finite logit".into()));
    }
    let probs = softmax(logits);
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok((best, probs))
}

/// Full eval-mode forward; deterministic.
pub fn forward_eval(
    input: &EncodedInput,
    params: &Parameters,
    config: &ModelConfig,
) -> Result<Vec<f64>> {
    let mut h = embed(input, params)?;
    for layer in &params.layers {
        let (next, _) = encoder_layer(&h, layer, &input.attention_mask, config);
        h = next;
    }
    let pooled = pool(&h, params);
    Ok(classify(&pooled, params, None))
}

/// Train-mode forward recording the cache needed by the backward pass.
pub fn forward_train<R: Rng>(
    input: &EncodedInput,
    params: &Parameters,
    config: &ModelConfig,
    rng: &mut R,
) -> Result<ForwardCache> {
    let embedded = embed(input, params)?;
    let mut h = embedded.clone();
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (next, cache) = encoder_layer(&h, layer, &input.attention_mask, config);
        layers.push(cache);
        h = next;
    }
    let final_cls = h.row(0).to_vec();
    let pooled = pool(&h, params);
    let mask = dropout_mask(pooled.len(), config.dropout_p, rng);
    let dropped: Vec<f64> = pooled.iter().zip(&mask).map(|(c, k)| c * k).collect();
    let logits = affine(&params.classifier_w, &dropped, &params.classifier_b.data);
    Ok(ForwardCache {
        input: input.clone(),
        embedded,
        layers,
        final_cls,
        pooled,
        dropout_mask: mask,
        dropped,
        logits,
    })
}

/// −log softmax(logits)[gold] via log-sum-exp.
pub fn cross_entropy(logits: &[f64], gold: usize) -> Result<f64> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(DocreError::Numeric("non-finite logit in loss".into()));
    }
    assert!(gold < logits.len(), "gold {gold} out of range");
    Ok(-log_softmax_at(logits, gold))
}
