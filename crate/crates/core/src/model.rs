//! The hierarchical attention network and its lexicon (L) and summary (S)
//! extensions.
//!
//! Word level: each turn's tokens are embedded, encoded by a bidirectional
//! GRU and pooled by attention into a turn vector `t_k`. With conditioning
//! the lexicon context vector `c_ki` is appended to every word state before
//! scoring, so both the attention weights and `t_k` see it.
//!
//! Turn level: the `t_k` are encoded by a second bidirectional GRU into
//! states `u_k`; attention over the `u_k` yields the session vector `r`.
//! With a summary, the summary tokens go through the same word-level
//! encoder and attention and the result `o` is prepended: the classifier
//! sees `[o ‖ r]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, Label, Session, Turn, Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::lexicon::LexiconStack;
use crate::nn::{
    attend_backward, attend_cached, bigru_backward, bigru_forward, cross_entropy, dropout_mask, prefixed,
    grad_check, softmax, softmax_cross_entropy_grad, AttentionCache, GradCheckReport, AttentionOutput, AttnParams, BiGruCache,
    GruParams, Parameters, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Han,
    HanL,
    HanS,
    HanLS,
}

impl Variant {
    pub fn conditioning(self) -> bool {
        matches!(self, Variant::HanL | Variant::HanLS)
    }

    pub fn summary(self) -> bool {
        matches!(self, Variant::HanS | Variant::HanLS)
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Han => "HAN",
            Variant::HanL => "HAN+L",
            Variant::HanS => "HAN+S",
            Variant::HanLS => "HAN+L+S",
        }
    }
}

/// How word states are produced. `Identity` passes embeddings straight to
/// the word attention; it exists for testing order-sensitivity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordEncoder {
    #[default]
    BiGru,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HanConfig {
    pub conditioning: bool,
    pub summary: bool,
    /// GRU state size per direction.
    pub hidden: usize,
    pub attn_dim: usize,
    pub dropout: f64,
    /// Lexicon stack width; zero without conditioning.
    pub context_dim: usize,
    pub classes: usize,
    pub embedding_dim: usize,
    pub train_embeddings: bool,
    #[serde(default)]
    pub word_encoder: WordEncoder,
}

impl Default for HanConfig {
    fn default() -> Self {
        Self {
            conditioning: false,
            summary: false,
            hidden: 300,
            attn_dim: 300,
            dropout: 0.2,
            context_dim: 0,
            classes: 2,
            embedding_dim: 300,
            train_embeddings: false,
            word_encoder: WordEncoder::BiGru,
        }
    }
}

impl HanConfig {
    pub fn for_variant(variant: Variant, context_dim: usize) -> Self {
        Self {
            conditioning: variant.conditioning(),
            summary: variant.summary(),
            context_dim: if variant.conditioning() { context_dim } else { 0 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conditioning != (self.context_dim > 0) {
            return Err(Error::InvalidArgument(
                "conditioning requires a positive context_dim and vice versa".into(),
            ));
        }
        if self.classes != 2 {
            return Err(Error::InvalidArgument("only binary classification is supported".into()));
        }
        if self.hidden == 0 || self.attn_dim == 0 || self.embedding_dim == 0 {
            return Err(Error::InvalidArgument("hidden, attn_dim and embedding_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Width of the word encoder output.
    pub fn word_state_dim(&self) -> usize {
        match self.word_encoder {
            WordEncoder::BiGru => 2 * self.hidden,
            WordEncoder::Identity => self.embedding_dim,
        }
    }

    /// Width of a turn vector `t_k` (and of the summary vector).
    pub fn turn_rep_dim(&self) -> usize {
        self.word_state_dim() + self.context_dim
    }

    pub fn session_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn classifier_input_dim(&self) -> usize {
        self.session_dim() + if self.summary { self.turn_rep_dim() } else { 0 }
    }
}

/// All learnable tensors of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct HanParams {
    pub embedding: Tensor,
    pub word_fwd: GruParams,
    pub word_bwd: GruParams,
    pub word_attn: AttnParams,
    pub turn_fwd: GruParams,
    pub turn_bwd: GruParams,
    pub turn_attn: AttnParams,
    pub classifier_w: Tensor,
    pub classifier_b: Tensor,
}

impl HanParams {
    pub fn zeros(config: &HanConfig, vocab_size: usize) -> Self {
        let (e, h) = (config.embedding_dim, config.hidden);
        Self {
            embedding: Tensor::zeros(&[vocab_size, e]),
            word_fwd: GruParams::zeros(e, h),
            word_bwd: GruParams::zeros(e, h),
            word_attn: AttnParams::zeros(config.turn_rep_dim(), config.attn_dim),
            turn_fwd: GruParams::zeros(config.turn_rep_dim(), h),
            turn_bwd: GruParams::zeros(config.turn_rep_dim(), h),
            turn_attn: AttnParams::zeros(config.session_dim(), config.attn_dim),
            classifier_w: Tensor::zeros(&[config.classes, config.classifier_input_dim()]),
            classifier_b: Tensor::zeros(&[config.classes]),
        }
    }

    pub fn init<R: Rng>(config: &HanConfig, embeddings: &EmbeddingTable, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if embeddings.dim() != config.embedding_dim {
            return Err(Error::Shape(format!(
                "embedding table has dim {}, config expects {}",
                embeddings.dim(),
                config.embedding_dim
            )));
        }
        let (e, h) = (config.embedding_dim, config.hidden);
        let m = config.turn_rep_dim();
        let fan_in = config.classifier_input_dim();
        Ok(Self {
            embedding: embeddings.matrix.clone(),
            word_fwd: GruParams::init(e, h, rng),
            word_bwd: GruParams::init(e, h, rng),
            word_attn: AttnParams::init(m, config.attn_dim, rng),
            turn_fwd: GruParams::init(m, h, rng),
            turn_bwd: GruParams::init(m, h, rng),
            turn_attn: AttnParams::init(config.session_dim(), config.attn_dim, rng),
            classifier_w: Tensor::uniform(&[config.classes, fan_in], 1.0 / (fan_in as f64).sqrt(), rng),
            classifier_b: Tensor::zeros(&[config.classes]),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    /// Tensors updated by the optimiser; the embedding only when trainable.
    pub fn trainable(&self, train_embeddings: bool) -> Vec<&Tensor> {
        let all = self.tensors();
        if train_embeddings {
            all
        } else {
            all.into_iter().skip(1).collect()
        }
    }

    pub fn trainable_mut(&mut self, train_embeddings: bool) -> Vec<&mut Tensor> {
        let all = self.tensors_mut();
        if train_embeddings {
            all
        } else {
            all.into_iter().skip(1).collect()
        }
    }
}

impl Parameters for HanParams {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        out.extend(prefixed("word_fwd", self.word_fwd.named_tensors()));
        out.extend(prefixed("word_bwd", self.word_bwd.named_tensors()));
        out.extend(prefixed("word_attn", self.word_attn.named_tensors()));
        out.extend(prefixed("turn_fwd", self.turn_fwd.named_tensors()));
        out.extend(prefixed("turn_bwd", self.turn_bwd.named_tensors()));
        out.extend(prefixed("turn_attn", self.turn_attn.named_tensors()));
        out.push(("classifier.w".to_string(), &self.classifier_w));
        out.push(("classifier.b".to_string(), &self.classifier_b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        out.extend(self.word_fwd.tensors_mut());
        out.extend(self.word_bwd.tensors_mut());
        out.extend(self.word_attn.tensors_mut());
        out.extend(self.turn_fwd.tensors_mut());
        out.extend(self.turn_bwd.tensors_mut());
        out.extend(self.turn_attn.tensors_mut());
        out.push(&mut self.classifier_w);
        out.push(&mut self.classifier_b);
        out
    }
}

/// Truncation bounds applied when a session is turned into model input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_turn_tokens: usize,
    pub max_session_turns: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_turn_tokens: 200,
            max_session_turns: 400,
        }
    }
}

/// Token ids of one turn (or summary) plus per-token context vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexedText {
    pub ids: Vec<usize>,
    /// T×L lexicon annotations, present when conditioning.
    pub context: Option<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexedSession {
    pub id: String,
    pub turns: Vec<IndexedText>,
    pub summary: Option<IndexedText>,
    pub label: Option<Label>,
}

impl IndexedText {
    fn new(tokens: &[String], vocab: &Vocabulary, stack: Option<&LexiconStack>, max_tokens: usize) -> Self {
        let tokens = &tokens[..tokens.len().min(max_tokens)];
        let ids = tokens.iter().map(|t| vocab.id(t)).collect();
        // looked up by surface form, so words outside the vocabulary still
        // carry their annotations
        let context = stack.map(|s| {
            let mut c = Tensor::zeros(&[tokens.len(), s.total_dim()]);
            for (i, t) in tokens.iter().enumerate() {
                s.write_context(t, c.row_mut(i));
            }
            c
        });
        Self { ids, context }
    }
}

impl IndexedSession {
    pub fn new(session: &Session, vocab: &Vocabulary, stack: Option<&LexiconStack>, limits: Limits) -> Self {
        let index = |t: &Turn| IndexedText::new(&t.tokens, vocab, stack, limits.max_turn_tokens);
        Self {
            id: session.id.clone(),
            turns: session.turns.iter().take(limits.max_session_turns).map(index).collect(),
            summary: session
                .summary
                .as_ref()
                .map(|s| IndexedText::new(s, vocab, stack, limits.max_turn_tokens)),
            label: session.label,
        }
    }
}

/// Per-class multipliers on the cross-entropy term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; 2]);

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights([1.0, 1.0])
    }

    /// `n / (2 · n_c)`, i.e. inversely proportional to class frequency.
    pub fn balanced(labels: &[Label]) -> Self {
        let n = labels.len() as f64;
        let mut w = [1.0; 2];
        for (c, wc) in w.iter_mut().enumerate() {
            let count = labels.iter().filter(|l| l.index() == c).count();
            if count > 0 {
                *wc = n / (2.0 * count as f64);
            }
        }
        ClassWeights(w)
    }

    pub fn get(&self, label: Label) -> f64 {
        self.0[label.index()]
    }
}

/// Outputs and attention distributions of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Word attention weights per turn.
    pub word_attention: Vec<Vec<f64>>,
    /// Rows scored by the word attention (`h_ki`, or `h_ki ‖ c_ki`).
    pub word_rows: Vec<Tensor>,
    /// Turn vectors `t_k`.
    pub turn_reps: Vec<Vec<f64>>,
    /// Turn encoder states `u_k` scored by the turn attention.
    pub turn_states: Tensor,
    pub turn_attention: Vec<f64>,
    /// Session vector `r`.
    pub session_rep: Vec<f64>,
    pub summary_attention: Option<Vec<f64>>,
    pub summary_rep: Option<Vec<f64>>,
}

struct TextCache {
    embedded: Tensor,
    gru: Option<BiGruCache>,
    drop: Option<Vec<f64>>,
    rows: Tensor,
    attn: AttentionCache,
    out: AttentionOutput,
}

struct SessionCache {
    turns: Vec<TextCache>,
    summary: Option<TextCache>,
    turn_input: Tensor,
    turn_gru: BiGruCache,
    turn_drop: Option<Vec<f64>>,
    turn_rows: Tensor,
    turn_attn: AttentionCache,
    turn_out: AttentionOutput,
    classifier_input: Vec<f64>,
    logits: Vec<f64>,
}

fn apply_mask(t: &mut Tensor, mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        t.data_mut().iter_mut().zip(m).for_each(|(v, s)| *v *= s);
    }
}

fn encode_text<R: Rng>(
    text: &IndexedText,
    params: &HanParams,
    config: &HanConfig,
    train: bool,
    rng: &mut R,
) -> Result<TextCache> {
    if text.ids.is_empty() {
        return Err(Error::InvalidArgument("empty turn".into()));
    }
    let e = config.embedding_dim;
    let mut embedded = Tensor::zeros(&[text.ids.len(), e]);
    for (i, &id) in text.ids.iter().enumerate() {
        if id >= params.vocab_size() {
            return Err(Error::Shape(format!("token id {id} outside embedding table")));
        }
        embedded.row_mut(i).copy_from_slice(params.embedding.row(id));
    }

    let (mut states, gru) = match config.word_encoder {
        WordEncoder::BiGru => {
            let (s, c) = bigru_forward(&embedded, &params.word_fwd, &params.word_bwd)?;
            (s, Some(c))
        }
        WordEncoder::Identity => (embedded.clone(), None),
    };
    let drop = dropout_mask(states.len(), config.dropout, rng, train)?;
    apply_mask(&mut states, &drop);

    let rows = match (&text.context, config.conditioning) {
        (Some(c), true) => {
            if c.cols() != config.context_dim {
                return Err(Error::Shape(format!(
                    "context vectors have {} dims, config expects {}",
                    c.cols(),
                    config.context_dim
                )));
            }
            crate::nn::concat_columns(&states, c)?
        }
        (None, true) => {
            return Err(Error::InvalidArgument(
                "conditioning enabled but session was indexed without a lexicon stack".into(),
            ))
        }
        (_, false) => states,
    };
    let (out, attn) = attend_cached(&rows, None, &params.word_attn)?;
    Ok(TextCache {
        embedded,
        gru,
        drop,
        rows,
        attn,
        out,
    })
}

fn encode_text_backward(
    text: &IndexedText,
    cache: &TextCache,
    d_pooled: &[f64],
    params: &HanParams,
    config: &HanConfig,
    grads: &mut HanParams,
) {
    let d_rows = attend_backward(&cache.rows, &cache.out, &cache.attn, d_pooled, &params.word_attn, &mut grads.word_attn);
    let ws = config.word_state_dim();
    let mut d_states = Tensor::zeros(&[cache.rows.rows(), ws]);
    for i in 0..cache.rows.rows() {
        d_states.row_mut(i).copy_from_slice(&d_rows.row(i)[..ws]);
    }
    apply_mask(&mut d_states, &cache.drop);

    let need_input_grad = config.train_embeddings;
    let d_embedded = match (&cache.gru, config.word_encoder) {
        (Some(gru), WordEncoder::BiGru) => Some(bigru_backward(
            &cache.embedded,
            gru,
            &d_states,
            &params.word_fwd,
            &params.word_bwd,
            &mut grads.word_fwd,
            &mut grads.word_bwd,
        )),
        _ => Some(d_states),
    };
    if need_input_grad {
        if let Some(d) = d_embedded {
            for (i, &id) in text.ids.iter().enumerate() {
                if id != PAD {
                    crate::nn::axpy(1.0, d.row(i), grads.embedding.row_mut(id));
                }
            }
        }
    }
}

fn forward_cached<R: Rng>(
    session: &IndexedSession,
    params: &HanParams,
    config: &HanConfig,
    train: bool,
    rng: &mut R,
) -> Result<SessionCache> {
    if session.turns.is_empty() {
        return Err(Error::InvalidArgument(format!("session `{}` has no turns", session.id)));
    }
    let mut turns = Vec::with_capacity(session.turns.len());
    for t in &session.turns {
        turns.push(encode_text(t, params, config, train, rng)?);
    }
    let m = config.turn_rep_dim();
    let mut turn_input = Tensor::zeros(&[turns.len(), m]);
    for (k, c) in turns.iter().enumerate() {
        turn_input.row_mut(k).copy_from_slice(&c.out.pooled);
    }
    let (mut turn_rows, turn_gru) = bigru_forward(&turn_input, &params.turn_fwd, &params.turn_bwd)?;
    let turn_drop = dropout_mask(turn_rows.len(), config.dropout, rng, train)?;
    apply_mask(&mut turn_rows, &turn_drop);
    let (turn_out, turn_attn) = attend_cached(&turn_rows, None, &params.turn_attn)?;

    let summary = if config.summary {
        let text = session.summary.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("session `{}` has no summary", session.id))
        })?;
        Some(encode_text(text, params, config, train, rng)?)
    } else {
        None
    };

    let mut classifier_input = Vec::with_capacity(config.classifier_input_dim());
    if let Some(s) = &summary {
        classifier_input.extend_from_slice(&s.out.pooled);
    }
    classifier_input.extend_from_slice(&turn_out.pooled);
    let logits = crate::nn::dense(&classifier_input, &params.classifier_w, &params.classifier_b)?;

    Ok(SessionCache {
        turns,
        summary,
        turn_input,
        turn_gru,
        turn_drop,
        turn_rows,
        turn_attn,
        turn_out,
        classifier_input,
        logits,
    })
}

/// Runs the network on one session. Dropout is active only in `train`
/// mode; `rng` drives the dropout masks.
pub fn forward<R: Rng>(
    session: &IndexedSession,
    params: &HanParams,
    config: &HanConfig,
    train: bool,
    rng: &mut R,
) -> Result<ForwardTrace> {
    let c = forward_cached(session, params, config, train, rng)?;
    Ok(ForwardTrace {
        probs: softmax(&c.logits),
        logits: c.logits,
        word_attention: c.turns.iter().map(|t| t.out.weights.clone()).collect(),
        word_rows: c.turns.iter().map(|t| t.rows.clone()).collect(),
        turn_reps: c.turns.iter().map(|t| t.out.pooled.clone()).collect(),
        turn_states: c.turn_rows,
        turn_attention: c.turn_out.weights,
        session_rep: c.turn_out.pooled,
        summary_attention: c.summary.as_ref().map(|s| s.out.weights.clone()),
        summary_rep: c.summary.map(|s| s.out.pooled),
    })
}

/// Weighted cross-entropy of the trace's logits.
pub fn loss(trace: &ForwardTrace, label: Label, weights: Option<&ClassWeights>) -> f64 {
    let w = weights.map_or(1.0, |w| w.get(label));
    w * cross_entropy(&trace.probs, label.index())
}

/// Arg-max of the logits; ties resolve to `NotDepressed`.
pub fn predict(trace: &ForwardTrace) -> Label {
    predict_logits(&trace.logits)
}

pub fn predict_logits(logits: &[f64]) -> Label {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    Label::from_index(best).unwrap_or(Label::NotDepressed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub probs: Vec<f64>,
}

/// Forward and backward pass for one labelled session. Gradients of the
/// weighted loss are added to `grads`.
pub fn forward_backward<R: Rng>(
    session: &IndexedSession,
    params: &HanParams,
    config: &HanConfig,
    weights: &ClassWeights,
    train: bool,
    rng: &mut R,
    grads: &mut HanParams,
) -> Result<StepOutput> {
    let label = session
        .label
        .ok_or_else(|| Error::InvalidArgument(format!("session `{}` has no label", session.id)))?;
    let c = forward_cached(session, params, config, train, rng)?;
    let probs = softmax(&c.logits);
    let w = weights.get(label);
    let loss = w * cross_entropy(&probs, label.index());
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss of session `{}`", session.id)));
    }

    let d_logits = softmax_cross_entropy_grad(&probs, label.index(), w);
    grads.classifier_w.add_outer(&d_logits, &c.classifier_input);
    crate::nn::axpy(1.0, &d_logits, grads.classifier_b.data_mut());
    let mut d_input = vec![0.0; c.classifier_input.len()];
    params.classifier_w.matvec_t_acc(&d_logits, &mut d_input);

    let split = if config.summary { config.turn_rep_dim() } else { 0 };
    let (d_summary, d_session) = d_input.split_at(split);

    let mut d_turn_rows = attend_backward(&c.turn_rows, &c.turn_out, &c.turn_attn, d_session, &params.turn_attn, &mut grads.turn_attn);
    apply_mask(&mut d_turn_rows, &c.turn_drop);
    let d_turn_input = bigru_backward(
        &c.turn_input,
        &c.turn_gru,
        &d_turn_rows,
        &params.turn_fwd,
        &params.turn_bwd,
        &mut grads.turn_fwd,
        &mut grads.turn_bwd,
    );
    for (k, (text, cache)) in session.turns.iter().zip(&c.turns).enumerate() {
        encode_text_backward(text, cache, d_turn_input.row(k), params, config, grads);
    }
    if let (Some(cache), Some(text)) = (&c.summary, &session.summary) {
        encode_text_backward(text, cache, d_summary, params, config, grads);
    }
    Ok(StepOutput { loss, probs })
}

/// Compares the analytic gradient of the summed weighted loss over
/// `sessions` (evaluation mode) with central differences on the trainable
/// coordinates.
pub fn check_gradients(
    sessions: &[IndexedSession],
    params: &HanParams,
    config: &HanConfig,
    weights: &ClassWeights,
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let te = config.train_embeddings;
    let mut rng = crate::seed::rng(seed, &[]);
    let mut grads = params.zeros_like();
    for s in sessions {
        forward_backward(s, params, config, weights, false, &mut rng, &mut grads)?;
    }
    let flat = |p: &HanParams| -> Vec<f64> { p.trainable(te).iter().flat_map(|t| t.data().to_vec()).collect() };
    let theta = flat(params);
    let analytic = flat(&grads);
    let mut failure = None;
    let mut scratch = params.clone();
    let loss_at = |theta: &[f64]| {
        let mut offset = 0;
        for t in scratch.trainable_mut(te) {
            let n = t.len();
            t.data_mut().copy_from_slice(&theta[offset..offset + n]);
            offset += n;
        }
        let mut total = 0.0;
        let mut rng = crate::seed::rng(seed, &[]);
        for s in sessions {
            match forward(s, &scratch, config, false, &mut rng) {
                Ok(t) => total += loss(&t, s.label.unwrap_or(Label::NotDepressed), Some(weights)),
                Err(e) => {
                    failure.get_or_insert(e);
                    return f64::NAN;
                }
            }
        }
        total
    };
    let report = grad_check(loss_at, &theta, &analytic, samples, h, &mut rng);
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
