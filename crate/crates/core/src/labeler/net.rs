//! Hand-rolled tensors, initialization, and forward/backward passes.
//!
//! Shapes, with d = embedding_dim and V = vocabulary size:
//! embeddings V x d, attention projections d x d, head A 14 x 2d,
//! head B 7 x 2d. All math is f64; every random draw comes from a
//! caller-supplied ChaCha stream via `uniform_f64`, so nothing here
//! depends on the rand crate's distribution internals.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::focal_element_grad;
use super::vocab::Vocab;
use super::{ModelConfig, ModelParams, Pooling};
use crate::taxonomy::{PRIMARY_COUNT, SECONDARY_COUNT};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Attention {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NetTensors {
    pub emb_a: Tensor,
    pub attn_a: Option<Attention>,
    pub emb_b: Tensor,
    pub attn_b: Option<Attention>,
    pub head_a_w: Tensor,
    pub head_a_b: Tensor,
    pub head_b_w: Tensor,
    pub head_b_b: Tensor,
}

/// Uniform f64 in [0, 1) from the top 53 bits of a u64.
pub(crate) fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fan-in scaled uniform fill: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
fn fill_uniform(t: &mut Tensor, fan_in: usize, rng: &mut impl RngCore) {
    let scale = 1.0 / (fan_in as f64).sqrt();
    for v in &mut t.data {
        *v = (2.0 * uniform_f64(rng) - 1.0) * scale;
    }
}

impl NetTensors {
    /// Initialization order is fixed (encoder A, encoder B, head A, head B)
    /// so a seed pins every weight regardless of later training flags.
    pub fn init(config: &ModelConfig, vocab_size: usize, seed: u64) -> Self {
        let d = config.encoder.embedding_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = |rng: &mut ChaCha8Rng| {
            let mut t = Tensor::zeros(vocab_size, d);
            fill_uniform(&mut t, d, rng);
            t
        };
        let attention = |rng: &mut ChaCha8Rng| match config.encoder.pooling {
            Pooling::Mean => None,
            Pooling::SingleAttention => {
                let mut proj = || {
                    let mut t = Tensor::zeros(d, d);
                    fill_uniform(&mut t, d, rng);
                    t
                };
                Some(Attention {
                    w_q: proj(),
                    w_k: proj(),
                    w_v: proj(),
                })
            }
        };
        let emb_a = embedding(&mut rng);
        let attn_a = attention(&mut rng);
        let emb_b = embedding(&mut rng);
        let attn_b = attention(&mut rng);
        let head = |rows: usize, rng: &mut ChaCha8Rng| {
            let mut w = Tensor::zeros(rows, 2 * d);
            fill_uniform(&mut w, 2 * d, rng);
            (w, Tensor::zeros(rows, 1))
        };
        let (head_a_w, head_a_b) = head(SECONDARY_COUNT, &mut rng);
        let (head_b_w, head_b_b) = head(PRIMARY_COUNT, &mut rng);
        Self {
            emb_a,
            attn_a,
            emb_b,
            attn_b,
            head_a_w,
            head_a_b,
            head_b_w,
            head_b_b,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor| Tensor::zeros(t.rows, t.cols);
        let za = |a: &Option<Attention>| {
            a.as_ref().map(|a| Attention {
                w_q: z(&a.w_q),
                w_k: z(&a.w_k),
                w_v: z(&a.w_v),
            })
        };
        Self {
            emb_a: z(&self.emb_a),
            attn_a: za(&self.attn_a),
            emb_b: z(&self.emb_b),
            attn_b: za(&self.attn_b),
            head_a_w: z(&self.head_a_w),
            head_a_b: z(&self.head_a_b),
            head_b_w: z(&self.head_b_w),
            head_b_b: z(&self.head_b_b),
        }
    }

    /// Tensors in a fixed order; flat parameter indices follow it.
    pub fn tensor_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.emb_a.data];
        if let Some(a) = &self.attn_a {
            out.extend([&a.w_q.data[..], &a.w_k.data, &a.w_v.data]);
        }
        out.push(&self.emb_b.data);
        if let Some(a) = &self.attn_b {
            out.extend([&a.w_q.data[..], &a.w_k.data, &a.w_v.data]);
        }
        out.extend([
            &self.head_a_w.data[..],
            &self.head_a_b.data,
            &self.head_b_w.data,
            &self.head_b_b.data,
        ]);
        out
    }

    pub fn tensor_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.emb_a.data];
        if let Some(a) = &mut self.attn_a {
            out.extend([&mut a.w_q.data[..], &mut a.w_k.data, &mut a.w_v.data]);
        }
        out.push(&mut self.emb_b.data);
        if let Some(a) = &mut self.attn_b {
            out.extend([&mut a.w_q.data[..], &mut a.w_k.data, &mut a.w_v.data]);
        }
        out.extend([
            &mut self.head_a_w.data[..],
            &mut self.head_a_b.data,
            &mut self.head_b_w.data,
            &mut self.head_b_b.data,
        ]);
        out
    }

    pub fn flat_len(&self) -> usize {
        self.tensor_slices().iter().map(|s| s.len()).sum()
    }

    pub fn get_flat(&self, mut index: usize) -> f64 {
        for slice in self.tensor_slices() {
            if index < slice.len() {
                return slice[index];
            }
            index -= slice.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for slice in self.tensor_slices_mut() {
            if index < slice.len() {
                slice[index] = value;
                return;
            }
            index -= slice.len();
        }
        panic!("flat parameter index out of range");
    }

    /// Flat index range covered by head biases (always-checked slots in
    /// the gradient check: biases receive gradient whenever the loss does).
    pub fn head_bias_flat_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut offset = 0;
        let sizes: Vec<usize> = self.tensor_slices().iter().map(|s| s.len()).collect();
        // Bias tensors are the 2nd and 4th from the end of the fixed order.
        let n = sizes.len();
        for (i, size) in sizes.iter().enumerate() {
            if i == n - 3 || i == n - 1 {
                out.extend(offset..offset + size);
            }
            offset += size;
        }
        out
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub(crate) struct AttnCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Row-softmaxed attention weights, n x n.
    a: Tensor,
}

pub(crate) struct EncoderCache {
    tokens: Vec<usize>,
    /// Embedded input, n x d.
    x: Tensor,
    attn: Option<AttnCache>,
    pooled: Vec<f64>,
}

fn forward_encoder(emb: &Tensor, attn: Option<&Attention>, tokens: &[usize]) -> EncoderCache {
    let n = tokens.len();
    let d = emb.cols;
    assert!(n > 0, "encoder input must be non-empty");
    let mut x = Tensor::zeros(n, d);
    for (i, &tok) in tokens.iter().enumerate() {
        x.row_mut(i).copy_from_slice(emb.row(tok));
    }
    match attn {
        None => {
            let mut pooled = vec![0.0; d];
            for i in 0..n {
                for (p, v) in pooled.iter_mut().zip(x.row(i)) {
                    *p += v;
                }
            }
            pooled.iter_mut().for_each(|p| *p /= n as f64);
            EncoderCache {
                tokens: tokens.to_vec(),
                x,
                attn: None,
                pooled,
            }
        }
        Some(att) => {
            let q = matmul(&x, &att.w_q);
            let k = matmul(&x, &att.w_k);
            let v = matmul(&x, &att.w_v);
            let scale = 1.0 / (d as f64).sqrt();
            let mut a = Tensor::zeros(n, n);
            for i in 0..n {
                let row = a.row_mut(i);
                for (j, r) in row.iter_mut().enumerate() {
                    *r = dot(q.row(i), k.row(j)) * scale;
                }
                softmax_in_place(row);
            }
            // pooled = mean over rows of A V
            let mut pooled = vec![0.0; d];
            for i in 0..n {
                for j in 0..n {
                    let w = a.at(i, j);
                    for (p, vv) in pooled.iter_mut().zip(v.row(j)) {
                        *p += w * vv;
                    }
                }
            }
            pooled.iter_mut().for_each(|p| *p /= n as f64);
            EncoderCache {
                tokens: tokens.to_vec(),
                x,
                attn: Some(AttnCache { q, k, v, a }),
                pooled,
            }
        }
    }
}

/// Backpropagate `d_pooled` through one encoder, accumulating into the
/// matching gradient tensors.
fn backward_encoder(
    attn: Option<&Attention>,
    cache: &EncoderCache,
    d_pooled: &[f64],
    g_emb: &mut Tensor,
    g_attn: Option<&mut Attention>,
) {
    let n = cache.tokens.len();
    let d = g_emb.cols;
    let inv_n = 1.0 / n as f64;
    match (attn, &cache.attn, g_attn) {
        (None, None, None) => {
            for &tok in &cache.tokens {
                for (g, dp) in g_emb.row_mut(tok).iter_mut().zip(d_pooled) {
                    *g += dp * inv_n;
                }
            }
        }
        (Some(att), Some(ac), Some(g_att)) => {
            let scale = 1.0 / (d as f64).sqrt();
            // dH_i = d_pooled / n for every row.
            // dA_ij = dH_i . V_j ; dV_j = sum_i A_ij dH_i
            let mut d_a = Tensor::zeros(n, n);
            let mut d_v = Tensor::zeros(n, d);
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for (dp, vv) in d_pooled.iter().zip(ac.v.row(j)) {
                        s += dp * inv_n * vv;
                    }
                    d_a.data[i * n + j] = s;
                    let w = ac.a.at(i, j);
                    for (gv, dp) in d_v.row_mut(j).iter_mut().zip(d_pooled) {
                        *gv += w * dp * inv_n;
                    }
                }
            }
            // Softmax backward per row: dS_ij = A_ij (dA_ij - sum_k A_ik dA_ik)
            let mut d_s = Tensor::zeros(n, n);
            for i in 0..n {
                let dot_row = dot(ac.a.row(i), d_a.row(i));
                for j in 0..n {
                    d_s.data[i * n + j] = ac.a.at(i, j) * (d_a.at(i, j) - dot_row);
                }
            }
            // dQ = dS K scale ; dK = dS^T Q scale
            let mut d_q = Tensor::zeros(n, d);
            let mut d_k = Tensor::zeros(n, d);
            for i in 0..n {
                for j in 0..n {
                    let s_ij = d_s.at(i, j) * scale;
                    for c in 0..d {
                        d_q.data[i * d + c] += s_ij * ac.k.at(j, c);
                        d_k.data[j * d + c] += s_ij * ac.q.at(i, c);
                    }
                }
            }
            // Projection weight grads: dW = X^T dY ; input grad dX = dY W^T.
            let mut d_x = Tensor::zeros(n, d);
            accumulate_proj(&cache.x, &d_q, &att.w_q, &mut g_att.w_q, &mut d_x);
            accumulate_proj(&cache.x, &d_k, &att.w_k, &mut g_att.w_k, &mut d_x);
            accumulate_proj(&cache.x, &d_v, &att.w_v, &mut g_att.w_v, &mut d_x);
            for (i, &tok) in cache.tokens.iter().enumerate() {
                for (g, dx) in g_emb.row_mut(tok).iter_mut().zip(d_x.row(i)) {
                    *g += dx;
                }
            }
        }
        _ => unreachable!("attention parameters and cache must agree"),
    }
}

/// For Y = X W: add X^T dY into g_w and dY W^T into d_x.
fn accumulate_proj(x: &Tensor, d_y: &Tensor, w: &Tensor, g_w: &mut Tensor, d_x: &mut Tensor) {
    let (n, d) = (x.rows, x.cols);
    for i in 0..n {
        for j in 0..d {
            let x_ij = x.at(i, j);
            let gw_row = g_w.row_mut(j);
            for (c, gw) in gw_row.iter_mut().enumerate() {
                *gw += x_ij * d_y.at(i, c);
            }
        }
        for c in 0..d {
            let dy = d_y.at(i, c);
            for (j, dx) in d_x.row_mut(i).iter_mut().enumerate() {
                *dx += dy * w.at(j, c);
            }
        }
    }
}

fn matmul(x: &Tensor, w: &Tensor) -> Tensor {
    assert_eq!(x.cols, w.rows);
    let mut out = Tensor::zeros(x.rows, w.cols);
    for i in 0..x.rows {
        for j in 0..x.cols {
            let x_ij = x.at(i, j);
            let w_row = w.row(j);
            let out_row = out.row_mut(i);
            for (o, wv) in out_row.iter_mut().zip(w_row) {
                *o += x_ij * wv;
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Token sequences for one sample. With the dual encoder off, the clinical
/// text is appended to the report text and encoder B sees nothing.
pub(crate) fn tokenize_pair(
    vocab: &Vocab,
    config: &ModelConfig,
    report_text: &str,
    clinical_text: &str,
) -> (Vec<usize>, Option<Vec<usize>>, bool) {
    let max_len = config.encoder.max_seq_len;
    if config.use_dual_encoder {
        let (a, trunc_a) = vocab.encode(report_text, max_len);
        let (b, trunc_b) = vocab.encode(clinical_text, max_len);
        (a, Some(b), trunc_a || trunc_b)
    } else {
        let joined = format!("{report_text}{clinical_text}");
        let (a, trunc) = vocab.encode(&joined, max_len);
        (a, None, trunc)
    }
}

pub(crate) struct SampleCache {
    enc_a: EncoderCache,
    enc_b: Option<EncoderCache>,
    /// v_AB after dropout, the vector the heads actually read.
    features: Vec<f64>,
    /// Inverted-dropout mask (entries 0 or 1/(1-rate)); None in eval mode.
    mask: Option<Vec<f64>>,
    pub probs_a: Vec<f64>,
    pub probs_b: Vec<f64>,
}

pub(crate) enum Mode<'r> {
    Eval,
    Train { rng: &'r mut ChaCha8Rng },
}

pub(crate) fn forward_sample(
    params: &ModelParams,
    tokens_a: &[usize],
    tokens_b: Option<&[usize]>,
    mode: Mode,
) -> SampleCache {
    let d = params.config.encoder.embedding_dim;
    let net = &params.net;
    let enc_a = forward_encoder(&net.emb_a, net.attn_a.as_ref(), tokens_a);
    let enc_b = tokens_b.map(|t| forward_encoder(&net.emb_b, net.attn_b.as_ref(), t));
    let mut features = vec![0.0; 2 * d];
    features[..d].copy_from_slice(&enc_a.pooled);
    if let Some(eb) = &enc_b {
        features[d..].copy_from_slice(&eb.pooled);
    }
    let rate = params.config.encoder.dropout_rate;
    let mask = match mode {
        Mode::Train { rng } if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            let mask: Vec<f64> = (0..2 * d)
                .map(|_| if uniform_f64(rng) < rate { 0.0 } else { keep })
                .collect();
            for (f, m) in features.iter_mut().zip(&mask) {
                *f *= m;
            }
            Some(mask)
        }
        _ => None,
    };
    let head = |w: &Tensor, b: &Tensor| -> Vec<f64> {
        (0..w.rows)
            .map(|o| sigmoid(dot(w.row(o), &features) + b.data[o]))
            .collect()
    };
    let probs_a = head(&net.head_a_w, &net.head_a_b);
    let probs_b = head(&net.head_b_w, &net.head_b_b);
    SampleCache {
        enc_a,
        enc_b,
        features,
        mask,
        probs_a,
        probs_b,
    }
}

/// Backward pass for one sample. Returns the sample loss
/// loss_A + lambda * loss_B and accumulates parameter gradients.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_sample(
    params: &ModelParams,
    cache: &SampleCache,
    targets_a: &[bool],
    targets_b: &[bool],
    gamma: f64,
    alpha: f64,
    lambda: f64,
    grads: &mut NetTensors,
) -> f64 {
    let d = params.config.encoder.embedding_dim;
    let net = &params.net;
    let loss_a = super::loss::focal_loss(&cache.probs_a, targets_a, gamma, alpha);
    let loss_b = super::loss::focal_loss(&cache.probs_b, targets_b, gamma, alpha);
    let loss = loss_a + lambda * loss_b;

    let mut d_features = vec![0.0; 2 * d];
    let apply_head = |probs: &[f64],
                      targets: &[bool],
                      weight: f64,
                      w: &Tensor,
                      g_w: &mut Tensor,
                      g_b: &mut Tensor,
                      d_features: &mut [f64]| {
        if weight == 0.0 {
            return;
        }
        let scale = weight / probs.len() as f64;
        for (o, (&p, &t)) in probs.iter().zip(targets).enumerate() {
            let dz = focal_element_grad(p, t, gamma, alpha) * scale;
            g_b.data[o] += dz;
            let w_row = w.row(o);
            let gw_row = g_w.row_mut(o);
            for j in 0..2 * d {
                gw_row[j] += dz * cache.features[j];
                d_features[j] += dz * w_row[j];
            }
        }
    };
    apply_head(
        &cache.probs_a,
        targets_a,
        1.0,
        &net.head_a_w,
        &mut grads.head_a_w,
        &mut grads.head_a_b,
        &mut d_features,
    );
    apply_head(
        &cache.probs_b,
        targets_b,
        lambda,
        &net.head_b_w,
        &mut grads.head_b_w,
        &mut grads.head_b_b,
        &mut d_features,
    );

    if let Some(mask) = &cache.mask {
        for (df, m) in d_features.iter_mut().zip(mask) {
            *df *= m;
        }
    }
    backward_encoder(
        net.attn_a.as_ref(),
        &cache.enc_a,
        &d_features[..d],
        &mut grads.emb_a,
        grads.attn_a.as_mut(),
    );
    if let Some(enc_b) = &cache.enc_b {
        backward_encoder(
            net.attn_b.as_ref(),
            enc_b,
            &d_features[d..],
            &mut grads.emb_b,
            grads.attn_b.as_mut(),
        );
    }
    loss
}

/// Inference-mode feature vector for a pair of texts.
pub(crate) fn encode_features(
    params: &ModelParams,
    report_text: &str,
    clinical_text: &str,
) -> Vec<f64> {
    let (ta, tb, _) = tokenize_pair(&params.vocab, &params.config, report_text, clinical_text);
    let cache = forward_sample(params, &ta, tb.as_deref(), Mode::Eval);
    cache.features
}

/// Head-A probabilities for a pair of texts, inference mode.
pub(crate) fn predict_probs(
    params: &ModelParams,
    report_text: &str,
    clinical_text: &str,
) -> [f64; SECONDARY_COUNT] {
    let (ta, tb, _) = tokenize_pair(&params.vocab, &params.config, report_text, clinical_text);
    let cache = forward_sample(params, &ta, tb.as_deref(), Mode::Eval);
    let mut out = [0.0; SECONDARY_COUNT];
    out.copy_from_slice(&cache.probs_a);
    out
}
