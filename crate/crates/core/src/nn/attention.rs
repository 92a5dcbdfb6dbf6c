use rand::Rng;

use super::tensor::{axpy, dot, Tensor};
use super::Parameters;
use crate::error::{Error, Result};

/// Additive penalty applied to padded positions before the softmax.
pub const MASK_PENALTY: f64 = -1e9;

/// Scorer `g(h) = vᵀ tanh(W h + b)` with `W` A×M, `b` and `v` of length A.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnParams {
    pub w: Tensor,
    pub b: Tensor,
    pub v: Tensor,
}

impl AttnParams {
    pub fn zeros(input: usize, attn: usize) -> Self {
        Self {
            w: Tensor::zeros(&[attn, input]),
            b: Tensor::zeros(&[attn]),
            v: Tensor::zeros(&[attn]),
        }
    }

    pub fn init<R: Rng>(input: usize, attn: usize, rng: &mut R) -> Self {
        Self {
            w: Tensor::uniform(&[attn, input], 1.0 / (input.max(1) as f64).sqrt(), rng),
            b: Tensor::zeros(&[attn]),
            v: Tensor::uniform(&[attn], 1.0 / (attn as f64).sqrt(), rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn attn_dim(&self) -> usize {
        self.w.rows()
    }
}

impl Parameters for AttnParams {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b), ("v".into(), &self.v)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b, &mut self.v]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    /// One weight per row; zero on padded rows, summing to one elsewhere.
    pub weights: Vec<f64>,
    /// Weighted sum of the rows.
    pub pooled: Vec<f64>,
}

/// `tanh(W h_i + b)` for every row, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AttentionCache {
    act: Tensor,
}

pub fn attend_cached(
    rows: &Tensor,
    padding: Option<&[bool]>,
    p: &AttnParams,
) -> Result<(AttentionOutput, AttentionCache)> {
    let steps = rows.rows();
    let width = rows.cols();
    if steps == 0 {
        return Err(Error::Shape("attention over zero rows".into()));
    }
    if width != p.input_dim() {
        return Err(Error::Shape(format!(
            "attention scorer expects width {}, rows have {width}",
            p.input_dim()
        )));
    }
    if let Some(pad) = padding {
        if pad.len() != steps {
            return Err(Error::Shape("padding flags do not match row count".into()));
        }
        if pad.iter().all(|&m| m) {
            return Err(Error::InvalidArgument("all attention rows are masked".into()));
        }
    }
    let is_pad = |i: usize| padding.is_some_and(|m| m[i]);

    let a = p.attn_dim();
    let mut act = Tensor::zeros(&[steps, a]);
    let mut scores = Vec::with_capacity(steps);
    for i in 0..steps {
        let out = act.row_mut(i);
        out.copy_from_slice(p.b.data());
        p.w.matvec_acc(rows.row(i), out);
        out.iter_mut().for_each(|v| *v = v.tanh());
        let mut s = dot(p.v.data(), out);
        if is_pad(i) {
            s += MASK_PENALTY;
        }
        scores.push(s);
    }

    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for (i, w) in weights.iter_mut().enumerate() {
        *w = if is_pad(i) { 0.0 } else { *w / total };
    }

    let mut pooled = vec![0.0; width];
    for (i, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            axpy(w, rows.row(i), &mut pooled);
        }
    }
    if !pooled.iter().chain(&weights).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("attention".into()));
    }
    Ok((AttentionOutput { weights, pooled }, AttentionCache { act }))
}

/// Accumulates scorer gradients into `grads` and returns d(rows).
pub fn attend_backward(
    rows: &Tensor,
    out: &AttentionOutput,
    cache: &AttentionCache,
    d_pooled: &[f64],
    p: &AttnParams,
    grads: &mut AttnParams,
) -> Tensor {
    let steps = rows.rows();
    let alpha = &out.weights;
    let mut d_rows = Tensor::zeros(rows.shape());

    let d_alpha: Vec<f64> = (0..steps).map(|i| dot(d_pooled, rows.row(i))).collect();
    let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
    for i in 0..steps {
        if alpha[i] != 0.0 {
            axpy(alpha[i], d_pooled, d_rows.row_mut(i));
        }
        let d_score = alpha[i] * (d_alpha[i] - mean);
        if d_score == 0.0 {
            continue;
        }
        let act = cache.act.row(i);
        axpy(d_score, act, grads.v.data_mut());
        let d_pre: Vec<f64> = act
            .iter()
            .zip(p.v.data())
            .map(|(a, v)| d_score * v * (1.0 - a * a))
            .collect();
        grads.w.add_outer(&d_pre, rows.row(i));
        axpy(1.0, &d_pre, grads.b.data_mut());
        p.w.matvec_t_acc(&d_pre, d_rows.row_mut(i));
    }
    d_rows
}

/// Softmax-weighted pooling of the rows of `rows` (T×M). Rows flagged in
/// `padding` receive exactly zero weight.
pub fn attention_pool(rows: &Tensor, padding: Option<&[bool]>, p: &AttnParams) -> Result<AttentionOutput> {
    attend_cached(rows, padding, p).map(|(out, _)| out)
}

/// Attention over `[h_i ‖ c_i]`: the context rows `c` take part in both the
/// scoring and the pooled output.
pub fn conditioned_attention_pool(
    h: &Tensor,
    c: &Tensor,
    padding: Option<&[bool]>,
    p: &AttnParams,
) -> Result<AttentionOutput> {
    let joined = concat_columns(h, c)?;
    attention_pool(&joined, padding, p)
}

pub(crate) fn concat_columns(h: &Tensor, c: &Tensor) -> Result<Tensor> {
    if h.rows() != c.rows() {
        return Err(Error::Shape(format!(
            "{} hidden rows but {} context rows",
            h.rows(),
            c.rows()
        )));
    }
    let (m, l) = (h.cols(), c.cols());
    let mut joined = Tensor::zeros(&[h.rows(), m + l]);
    for i in 0..h.rows() {
        let row = joined.row_mut(i);
        row[..m].copy_from_slice(h.row(i));
        row[m..].copy_from_slice(c.row(i));
    }
    Ok(joined)
}
