//! Loss gradients by hand-rolled reverse mode, Adam with global-norm
//! clipping, and the epoch loop.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodedInput;
use crate::error::{DocreError, Result};
use crate::math::{softmax, gelu_grad, Tensor};
use crate::metrics::{self, Averaging, EpochReport, SplitMetrics};
use crate::model::{
    self, cross_entropy, ForwardCache, ModelConfig, Parameters,
};

pub use crate::model::cross_entropy as loss;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub freeze_encoder: bool,
    /// Optional hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 3,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip_norm: 1.0,
            seed: 42,
            freeze_encoder: false,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(DocreError::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(DocreError::Config("epochs must be at least 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(DocreError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// One gradient tensor per parameter tensor, same shapes.
pub type GradientSet = Parameters;

fn col_sum(t: &Tensor) -> Vec<f64> {
    let (rows, cols) = (t.rows(), t.cols());
    let mut out = vec![0.0; cols];
    for i in 0..rows {
        for (o, &v) in out.iter_mut().zip(t.row(i)) {
            *o += v;
        }
    }
    out
}

fn add_slice(dst: &mut Tensor, src: &[f64]) {
    assert_eq!(dst.data.len(), src.len());
    for (d, s) in dst.data.iter_mut().zip(src) {
        *d += *s;
    }
}

/// LayerNorm backward for one matrix. Accumulates gain/bias gradients and
/// returns the gradient with respect to the pre-norm input.
fn layer_norm_backward(
    dy: &Tensor,
    cache: &model::LayerNormCache,
    gain: &Tensor,
    dgain: &mut Tensor,
    dbias: &mut Tensor,
) -> Tensor {
    let (rows, d) = (dy.rows(), dy.cols());
    let mut dx = Tensor::zeros(&[rows, d]);
    for i in 0..rows {
        let dy_row = dy.row(i);
        let xhat = cache.normalized.row(i);
        for j in 0..d {
            dgain.data[j] += dy_row[j] * xhat[j];
            dbias.data[j] += dy_row[j];
        }
        let dxhat: Vec<f64> = (0..d).map(|j| dy_row[j] * gain.data[j]).collect();
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let inv_std = cache.inv_std[i];
        let dx_row = dx.row_mut(i);
        for j in 0..d {
            dx_row[j] = inv_std * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
    }
    dx
}

/// Exact reverse-mode gradients of the cross-entropy loss for one cached
/// forward. With `freeze_encoder`, encoder-side tensors get zero gradients.
pub fn backward(
    cache: &ForwardCache,
    gold: usize,
    params: &Parameters,
    config: &ModelConfig,
    freeze_encoder: bool,
    grads: &mut GradientSet,
) -> Result<f64> {
    if cache.layers.len() != params.layers.len() {
        return Err(DocreError::Config(
            "forward cache does not match parameter layer count".into(),
        ));
    }
    let loss = cross_entropy(&cache.logits, gold)?;
    let d = config.d_model;
    let len = cache.input.token_ids.len();

    // classifier
    let mut dlogits = softmax(&cache.logits);
    dlogits[gold] -= 1.0;
    for (r, &dl) in dlogits.iter().enumerate() {
        for (j, &x) in cache.dropped.iter().enumerate() {
            grads.classifier_w.row_mut(r)[j] += dl * x;
        }
        grads.classifier_b.data[r] += dl;
    }
    let ddropped: Vec<f64> = (0..d)
        .map(|j| {
            dlogits
                .iter()
                .enumerate()
                .map(|(r, &dl)| dl * params.classifier_w.row(r)[j])
                .sum()
        })
        .collect();

    // dropout and pooler tanh
    let dpooled: Vec<f64> = ddropped
        .iter()
        .zip(&cache.dropout_mask)
        .map(|(g, m)| g * m)
        .collect();
    let dpre_tanh: Vec<f64> = dpooled
        .iter()
        .zip(&cache.pooled)
        .map(|(g, c)| g * (1.0 - c * c))
        .collect();
    for (i, &g) in dpre_tanh.iter().enumerate() {
        for (j, &h) in cache.final_cls.iter().enumerate() {
            grads.pooler_w.row_mut(i)[j] += g * h;
        }
        grads.pooler_b.data[i] += g;
    }
    let mut dh = Tensor::zeros(&[len, d]);
    {
        let row0 = dh.row_mut(0);
        for (j, slot) in row0.iter_mut().enumerate() {
            *slot = dpre_tanh
                .iter()
                .enumerate()
                .map(|(i, &g)| g * params.pooler_w.row(i)[j])
                .sum();
        }
    }

    // encoder layers, in reverse
    let dk = config.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    for (layer_idx, lc) in cache.layers.iter().enumerate().rev() {
        let lp = &params.layers[layer_idx];
        let lg = &mut grads.layers[layer_idx];

        // out = LayerNorm(resid2)
        let dresid2 = layer_norm_backward(&dh, &lc.ln2, &lp.ln2_gain, &mut lg.ln2_gain, &mut lg.ln2_bias);

        // resid2 = ffn_out + h2
        let mut dh2 = dresid2.clone();
        let dffn_out = dresid2;

        // ffn_out = gelu(h2·W1 + b1)·W2 + b2
        let dw2 = lc.ffn_act.transpose_matmul(&dffn_out);
        lg.ffn_w2.add_assign(&dw2);
        add_slice(&mut lg.ffn_b2, &col_sum(&dffn_out));
        let dffn_act = dffn_out.matmul_transpose(&lp.ffn_w2);
        let mut dffn_pre = dffn_act;
        for (g, &x) in dffn_pre.data.iter_mut().zip(&lc.ffn_pre.data) {
            *g *= gelu_grad(x);
        }
        let dw1 = lc.h2.transpose_matmul(&dffn_pre);
        lg.ffn_w1.add_assign(&dw1);
        add_slice(&mut lg.ffn_b1, &col_sum(&dffn_pre));
        dh2.add_assign(&dffn_pre.matmul_transpose(&lp.ffn_w1));

        // h2 = LayerNorm(resid1)
        let dresid1 =
            layer_norm_backward(&dh2, &lc.ln1, &lp.ln1_gain, &mut lg.ln1_gain, &mut lg.ln1_bias);

        // resid1 = attn_out + input
        let mut dinput = dresid1.clone();
        let dattn_out = dresid1;

        // attn_out = concat·W_o + b_o
        let dwo = lc.attn_concat.transpose_matmul(&dattn_out);
        lg.w_o.add_assign(&dwo);
        add_slice(&mut lg.b_o, &col_sum(&dattn_out));
        let dconcat = dattn_out.matmul_transpose(&lp.w_o);

        let mut dq = Tensor::zeros(&[len, d]);
        let mut dkk = Tensor::zeros(&[len, d]);
        let mut dv = Tensor::zeros(&[len, d]);
        for head in 0..config.n_heads {
            let off = head * dk;
            let probs = &lc.attn_probs[head];
            // dV_h = Aᵀ·dconcat_h ; dA = dconcat_h·V_hᵀ
            for i in 0..len {
                let dc_i = &dconcat.row(i)[off..off + dk];
                let p_row = probs.row(i);
                // softmax backward needs dA row i first
                let mut da_row = vec![0.0; len];
                for (j, da) in da_row.iter_mut().enumerate() {
                    if p_row[j] != 0.0 {
                        *da = dc_i
                            .iter()
                            .zip(&lc.v.row(j)[off..off + dk])
                            .map(|(a, b)| a * b)
                            .sum();
                    }
                }
                let s_i: f64 = p_row.iter().zip(&da_row).map(|(p, da)| p * da).sum();
                for j in 0..len {
                    let p = p_row[j];
                    if p == 0.0 {
                        continue;
                    }
                    // accumulate dV
                    let dv_j = &mut dv.row_mut(j)[off..off + dk];
                    for (slot, &g) in dv_j.iter_mut().zip(dc_i) {
                        *slot += p * g;
                    }
                    let ds = p * (da_row[j] - s_i);
                    // dq_i += ds·k_j·scale ; dk_j += ds·q_i·scale
                    let k_j = &lc.k.row(j)[off..off + dk];
                    let q_i = &lc.q.row(i)[off..off + dk];
                    let dq_i = &mut dq.row_mut(i)[off..off + dk];
                    for (slot, &kv) in dq_i.iter_mut().zip(k_j) {
                        *slot += ds * kv * scale;
                    }
                    let dk_j = &mut dkk.row_mut(j)[off..off + dk];
                    for (slot, &qv) in dk_j.iter_mut().zip(q_i) {
                        *slot += ds * qv * scale;
                    }
                }
            }
        }

        // q = input·W_q + b_q and likewise for k, v
        lg.w_q.add_assign(&lc.input.transpose_matmul(&dq));
        add_slice(&mut lg.b_q, &col_sum(&dq));
        lg.w_k.add_assign(&lc.input.transpose_matmul(&dkk));
        add_slice(&mut lg.b_k, &col_sum(&dkk));
        lg.w_v.add_assign(&lc.input.transpose_matmul(&dv));
        add_slice(&mut lg.b_v, &col_sum(&dv));
        dinput.add_assign(&dq.matmul_transpose(&lp.w_q));
        dinput.add_assign(&dkk.matmul_transpose(&lp.w_k));
        dinput.add_assign(&dv.matmul_transpose(&lp.w_v));
        dh = dinput;
    }

    // embedding tables: scatter-add row gradients
    for i in 0..len {
        let g_row = dh.row(i);
        add_row(&mut grads.token_embed, cache.input.token_ids[i], g_row);
        add_row(&mut grads.position_embed, cache.input.position_ids[i], g_row);
        add_row(&mut grads.segment_embed, cache.input.segment_ids[i] as usize, g_row);
    }

    if freeze_encoder {
        grads.visit_mut(|name, t| {
            if Parameters::is_encoder_tensor(name) {
                t.fill(0.0);
            }
        });
    }
    Ok(loss)
}

fn add_row(table: &mut Tensor, row: usize, grad: &[f64]) {
    for (slot, &g) in table.row_mut(row).iter_mut().zip(grad) {
        *slot += g;
    }
}

/// Adam moment estimates, one pair of tensors per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: Parameters,
    pub v: Parameters,
    pub step: usize,
}

impl OptimizerState {
    pub fn new(params: &Parameters) -> Self {
        OptimizerState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// Global L2 norm over all gradient tensors.
pub fn global_norm(grads: &GradientSet) -> f64 {
    let mut sq = 0.0;
    grads.visit(|_, t| sq += t.data.iter().map(|v| v * v).sum::<f64>());
    sq.sqrt()
}

/// Scales all gradients down so the global norm is at most `clip_norm`.
pub fn clip_gradients(grads: &mut GradientSet, clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm && norm > 0.0 {
        let factor = clip_norm / norm;
        grads.visit_mut(|_, t| t.scale(factor));
    }
    norm
}

/// Clips, then applies one bias-corrected Adam update in place.
pub fn optimizer_step(
    params: &mut Parameters,
    grads: &mut GradientSet,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    clip_gradients(grads, config.grad_clip_norm);
    let mut finite = true;
    grads.visit(|_, t| finite &= t.is_finite());
    if !finite {
        return Err(DocreError::Numeric(
            "non-finite gradient after clipping".into(),
        ));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - config.beta1.powf(t);
    let bc2 = 1.0 - config.beta2.powf(t);

    let g_list = grads.tensors();
    let m_list = state.m.tensors_mut();
    let v_list = state.v.tensors_mut();
    let p_list = params.tensors_mut();
    for (((p, g), m), v) in p_list.into_iter().zip(g_list).zip(m_list).zip(v_list) {
        for j in 0..p.data.len() {
            let gj = g.data[j];
            m.data[j] = config.beta1 * m.data[j] + (1.0 - config.beta1) * gj;
            v.data[j] = config.beta2 * v.data[j] + (1.0 - config.beta2) * gj * gj;
            let m_hat = m.data[j] / bc1;
            let v_hat = v.data[j] / bc2;
            p.data[j] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

/// Mean loss and gradient over a batch; gradients are averaged in input
/// order so accumulation is deterministic.
pub fn batch_backward<R: Rng>(
    batch: &[&EncodedInput],
    params: &Parameters,
    model_config: &ModelConfig,
    freeze_encoder: bool,
    rng: &mut R,
) -> Result<(f64, GradientSet, Vec<usize>)> {
    let mut grads = params.zeros_like();
    let mut total_loss = 0.0;
    let mut predictions = Vec::with_capacity(batch.len());
    for input in batch {
        let cache = model::forward_train(input, params, model_config, rng)?;
        total_loss += backward(
            &cache,
            input.relation_id,
            params,
            model_config,
            freeze_encoder,
            &mut grads,
        )?;
        predictions.push(model::predict(&cache.logits)?.0);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.visit_mut(|_, t| t.scale(inv));
    Ok((total_loss * inv, grads, predictions))
}

fn eval_split(
    instances: &[EncodedInput],
    params: &Parameters,
    model_config: &ModelConfig,
) -> Result<SplitMetrics> {
    let mut predictions = Vec::with_capacity(instances.len());
    let mut golds = Vec::with_capacity(instances.len());
    let mut loss_sum = 0.0;
    for input in instances {
        let logits = model::forward_eval(input, params, model_config)?;
        loss_sum += cross_entropy(&logits, input.relation_id)?;
        predictions.push(model::predict(&logits)?.0);
        golds.push(input.relation_id);
    }
    let scores = metrics::score_with_na(&predictions, &golds, 0, Averaging::Micro)?;
    Ok(SplitMetrics::from_scores(
        scores,
        loss_sum / instances.len() as f64,
    ))
}

/// Runs the epoch loop: seeded shuffle, fixed-size batches (final partial
/// batch kept), one Adam step per batch, per-epoch train and validation
/// metrics.
pub fn train(
    instances: &[EncodedInput],
    val_instances: &[EncodedInput],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(Parameters, Vec<EpochReport>)> {
    train_with_callback(instances, val_instances, model_config, train_config, |_, _, _| Ok(()))
}

/// Like [`train`] but invokes `on_epoch` after each epoch's report, e.g. to
/// write a checkpoint.
pub fn train_with_callback<F>(
    instances: &[EncodedInput],
    val_instances: &[EncodedInput],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    mut on_epoch: F,
) -> Result<(Parameters, Vec<EpochReport>)>
where
    F: FnMut(usize, &Parameters, &EpochReport) -> Result<()>,
{
    train_config.validate()?;
    model_config.validate()?;
    if instances.is_empty() {
        return Err(DocreError::Config("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut params = Parameters::init(model_config, &mut rng);
    let mut state = OptimizerState::new(&params);
    let mut reports = Vec::with_capacity(train_config.epochs);
    let mut steps_taken = 0usize;

    for epoch in 1..=train_config.epochs {
        let mut order: Vec<usize> = (0..instances.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_preds = Vec::with_capacity(instances.len());
        let mut epoch_golds = Vec::with_capacity(instances.len());
        let mut batches = 0usize;
        for chunk in order.chunks(train_config.batch_size) {
            let batch: Vec<&EncodedInput> = chunk.iter().map(|&i| &instances[i]).collect();
            let (loss, mut grads, preds) = batch_backward(
                &batch,
                &params,
                model_config,
                train_config.freeze_encoder,
                &mut rng,
            )?;
            optimizer_step(&mut params, &mut grads, &mut state, train_config)?;
            epoch_loss += loss;
            batches += 1;
            epoch_preds.extend(preds);
            epoch_golds.extend(chunk.iter().map(|&i| instances[i].relation_id));
            steps_taken += 1;
            if train_config.max_steps.is_some_and(|max| steps_taken >= max) {
                break;
            }
        }
        push_report(
            &mut reports, epoch, epoch_loss / batches as f64,
            &epoch_preds, &epoch_golds, val_instances, &params, model_config,
        )?;
        on_epoch(epoch, &params, reports.last().unwrap())?;
        if train_config.max_steps.is_some_and(|max| steps_taken >= max) {
            break;
        }
    }
    Ok((params, reports))
}

#[allow(clippy::too_many_arguments)]
fn push_report(
    reports: &mut Vec<EpochReport>,
    epoch: usize,
    train_loss: f64,
    preds: &[usize],
    golds: &[usize],
    val_instances: &[EncodedInput],
    params: &Parameters,
    model_config: &ModelConfig,
) -> Result<()> {
    let train_scores = metrics::score_with_na(preds, golds, 0, Averaging::Micro)?;
    let val = if val_instances.is_empty() {
        None
    } else {
        Some(eval_split(val_instances, params, model_config)?)
    };
    reports.push(EpochReport {
        epoch,
        train: SplitMetrics::from_scores(train_scores, train_loss),
        val,
        test: None,
    });
    Ok(())
}

/// Evaluates a split with an existing model.
pub fn evaluate(
    instances: &[EncodedInput],
    params: &Parameters,
    model_config: &ModelConfig,
) -> Result<SplitMetrics> {
    if instances.is_empty() {
        return Err(DocreError::Config("evaluation set is empty".into()));
    }
    eval_split(instances, params, model_config)
}
