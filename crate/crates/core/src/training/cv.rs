use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::folds::kfold_split;
use super::metrics::{evaluate, MeanStd, Metrics};
use super::trainer::{fit, HanTrainer, History};
use crate::baseline::{svm_train, tfidf_fit, LinearSvm, SvmConfig, TfIdfModel};
use crate::corpus::{
    build_vocabulary, select_view, EmbeddingCoverage, EmbeddingTable, Label, PretrainedVectors, Session, View,
    Vocabulary,
};
use crate::error::{Error, Result};
use crate::lexicon::LexiconStack;
use crate::model::{
    forward, predict, ClassWeights, HanConfig, HanParams, IndexedSession, Limits, Variant, WordEncoder,
};
use crate::nn::AdamConfig;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Svm,
    Han,
    HanL,
    HanS,
    HanLs,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Svm, ModelKind::Han, ModelKind::HanL, ModelKind::HanS, ModelKind::HanLs];

    pub fn variant(self) -> Option<Variant> {
        match self {
            ModelKind::Svm => None,
            ModelKind::Han => Some(Variant::Han),
            ModelKind::HanL => Some(Variant::HanL),
            ModelKind::HanS => Some(Variant::HanS),
            ModelKind::HanLs => Some(Variant::HanLS),
        }
    }

    pub fn needs_lexica(self) -> bool {
        self.variant().is_some_and(Variant::conditioning)
    }

    pub fn needs_summary(self) -> bool {
        self.variant().is_some_and(Variant::summary)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Han => "han",
            ModelKind::HanL => "han_l",
            ModelKind::HanS => "han_s",
            ModelKind::HanLs => "han_ls",
        }
    }

    pub fn display_name(self) -> &'static str {
        self.variant().map_or("SVM", Variant::display_name)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}`")))
    }
}

/// Everything that determines a training or cross-validation run, apart
/// from the input data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub max_epochs: usize,
    pub lr: f64,
    pub dropout: f64,
    pub patience: usize,
    pub seed: u64,
    pub view: View,
    pub folds: usize,
    pub hidden: usize,
    pub attn_dim: usize,
    pub embedding_dim: usize,
    pub train_embeddings: bool,
    /// Inverse-frequency class weights in the loss.
    pub class_weights: bool,
    pub min_count: usize,
    pub limits: Limits,
    pub svm_c: f64,
    pub svm_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Han,
            max_epochs: 40,
            lr: 1e-3,
            dropout: 0.2,
            patience: 5,
            seed: 0,
            view: View::Client,
            folds: 5,
            hidden: 300,
            attn_dim: 300,
            embedding_dim: 300,
            train_embeddings: false,
            class_weights: true,
            min_count: 1,
            limits: Limits::default(),
            svm_c: 1.0,
            svm_epochs: 50,
        }
    }
}

impl TrainConfig {
    /// Checks field ranges; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::InvalidArgument(format!("{field}: {why}")));
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be a positive number");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must lie in [0, 1)");
        }
        if self.patience == 0 {
            return bad("patience", "must be at least 1");
        }
        if self.folds < 2 {
            return bad("folds", "must be at least 2");
        }
        if self.hidden == 0 {
            return bad("hidden", "must be at least 1");
        }
        if self.attn_dim == 0 {
            return bad("attn_dim", "must be at least 1");
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim", "must be at least 1");
        }
        if self.min_count == 0 {
            return bad("min_count", "must be at least 1");
        }
        if self.limits.max_turn_tokens == 0 || self.limits.max_session_turns == 0 {
            return bad("limits", "truncation bounds must be at least 1");
        }
        if !(self.svm_c > 0.0 && self.svm_c.is_finite()) {
            return bad("svm_c", "must be a positive number");
        }
        if self.svm_epochs == 0 {
            return bad("svm_epochs", "must be at least 1");
        }
        Ok(())
    }

    pub fn han_config(&self, context_dim: usize) -> Option<HanConfig> {
        let variant = self.model.variant()?;
        Some(HanConfig {
            hidden: self.hidden,
            attn_dim: self.attn_dim,
            dropout: self.dropout,
            embedding_dim: self.embedding_dim,
            train_embeddings: self.train_embeddings,
            word_encoder: WordEncoder::BiGru,
            ..HanConfig::for_variant(variant, context_dim)
        })
    }
}

/// Optional shared inputs: the lexicon stack and pretrained vectors.
#[derive(Clone, Copy, Debug, Default)]
pub struct Resources<'a> {
    pub stack: Option<&'a LexiconStack>,
    pub embeddings: Option<&'a PretrainedVectors>,
}

/// Checks that the data and resources suit the configured model.
pub fn check_inputs(sessions: &[Session], resources: &Resources, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if sessions.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.model.needs_lexica() && resources.stack.is_none() {
        return Err(Error::InvalidArgument(format!(
            "model {} requires at least one lexicon",
            config.model.as_str()
        )));
    }
    if config.model.needs_summary() {
        if let Some(s) = sessions.iter().find(|s| s.summary.is_none()) {
            return Err(Error::InvalidArgument(format!(
                "model {} requires summaries; session `{}` has none",
                config.model.as_str(),
                s.id
            )));
        }
    }
    for s in sessions {
        s.require_label()?;
    }
    if let Some(e) = resources.embeddings {
        if e.dim() != config.embedding_dim && config.model != ModelKind::Svm {
            return Err(Error::InvalidArgument(format!(
                "embedding_dim: config says {}, vectors have {}",
                config.embedding_dim,
                e.dim()
            )));
        }
    }
    Ok(())
}

/// Model inputs built from a training split only.
#[derive(Clone, Debug)]
pub struct PreparedFold {
    pub config: HanConfig,
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub coverage: Option<EmbeddingCoverage>,
    pub train: Vec<IndexedSession>,
    pub validation: Vec<IndexedSession>,
}

const EMBEDDING_STREAM: u64 = 0x454d_4244;
const INIT_STREAM: u64 = 0x494e_4954;
const TRAIN_STREAM: u64 = 0x5452_4149;
const FOLD_STREAM: u64 = 0x4356_464f;

/// Vocabulary, embeddings and indexed sessions for one split. Nothing from
/// `validation` influences the vocabulary or embedding coverage.
pub fn prepare_fold(
    train: &[Session],
    validation: &[Session],
    resources: &Resources,
    config: &TrainConfig,
    seed: u64,
) -> Result<PreparedFold> {
    let stack = if config.model.needs_lexica() { resources.stack } else { None };
    let han = config
        .han_config(stack.map_or(0, LexiconStack::total_dim))
        .ok_or_else(|| Error::InvalidArgument("prepare_fold needs a HAN model".into()))?;
    han.validate()?;
    let vocab = build_vocabulary(train, config.min_count)?;
    let mut rng = seed::rng(seed, &[EMBEDDING_STREAM]);
    let (mut embeddings, coverage) = match resources.embeddings {
        Some(v) => {
            let (t, c) = EmbeddingTable::from_pretrained(v, &vocab, &mut rng);
            (t, Some(c))
        }
        None => (EmbeddingTable::random(&vocab, config.embedding_dim, &mut rng), None),
    };
    embeddings.trainable = config.train_embeddings;
    let index = |s: &[Session]| {
        s.iter()
            .map(|x| IndexedSession::new(x, &vocab, stack, config.limits))
            .collect::<Vec<_>>()
    };
    Ok(PreparedFold {
        config: han,
        train: index(train),
        validation: index(validation),
        vocab,
        embeddings,
        coverage,
    })
}

/// A fitted classifier.
#[derive(Clone, Debug)]
pub enum TrainedModel {
    Han {
        config: HanConfig,
        vocab: Vocabulary,
        params: HanParams,
        limits: Limits,
    },
    Svm {
        tfidf: TfIdfModel,
        svm: LinearSvm,
    },
}

impl TrainedModel {
    /// Predicts labels for sessions that already went through `select_view`.
    pub fn predict(&self, sessions: &[Session], stack: Option<&LexiconStack>) -> Result<Vec<Label>> {
        match self {
            TrainedModel::Svm { tfidf, svm } => Ok(sessions.iter().map(|s| svm.predict(&tfidf.transform(s))).collect()),
            TrainedModel::Han {
                config,
                vocab,
                params,
                limits,
            } => {
                let stack = if config.conditioning {
                    Some(stack.ok_or_else(|| Error::InvalidArgument("conditioned model needs its lexicon stack".into()))?)
                } else {
                    None
                };
                let indexed: Vec<IndexedSession> =
                    sessions.iter().map(|s| IndexedSession::new(s, vocab, stack, *limits)).collect();
                predict_indexed(&indexed, params, config)
            }
        }
    }
}

pub fn predict_indexed(sessions: &[IndexedSession], params: &HanParams, config: &HanConfig) -> Result<Vec<Label>> {
    // dropout is off in evaluation, so the rng is never drawn from
    let mut rng = seed::rng(0, &[]);
    sessions
        .iter()
        .map(|s| forward(s, params, config, false, &mut rng).map(|t| predict(&t)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: Option<History>,
    pub coverage: Option<EmbeddingCoverage>,
}

/// Fits one model on `train`, selecting the epoch by loss on `validation`.
/// Both splits must already be restricted to the configured view.
pub fn train_one(
    train: &[Session],
    validation: &[Session],
    resources: &Resources,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InvalidArgument("training and validation splits must be non-empty".into()));
    }
    let train_labels = train.iter().map(Session::require_label).collect::<Result<Vec<_>>>()?;
    if config.model == ModelKind::Svm {
        let tfidf = tfidf_fit(train)?;
        let xs: Vec<_> = train.iter().map(|s| tfidf.transform(s)).collect();
        let svm_config = SvmConfig {
            c: config.svm_c,
            epochs: config.svm_epochs,
            bias_feature: 1.0,
            seed: seed::derive(seed, &[TRAIN_STREAM]),
        };
        let fit = svm_train(&xs, &train_labels, tfidf.dim(), &svm_config)?;
        return Ok(TrainOutcome {
            model: TrainedModel::Svm { tfidf, svm: fit.model },
            history: None,
            coverage: None,
        });
    }

    let prepared = prepare_fold(train, validation, resources, config, seed)?;
    let mut rng = seed::rng(seed, &[INIT_STREAM]);
    let params = HanParams::init(&prepared.config, &prepared.embeddings, &mut rng)?;
    let weights = if config.class_weights {
        ClassWeights::balanced(&train_labels)
    } else {
        ClassWeights::uniform()
    };
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut trainer = HanTrainer::new(
        prepared.config.clone(),
        params,
        adam,
        &prepared.train,
        &prepared.validation,
        weights,
        seed::derive(seed, &[TRAIN_STREAM]),
    )?;
    let (params, history) = fit(&mut trainer, config.max_epochs, config.patience)?;
    Ok(TrainOutcome {
        model: TrainedModel::Han {
            config: prepared.config,
            vocab: prepared.vocab,
            params,
            limits: config.limits,
        },
        history: Some(history),
        coverage: prepared.coverage,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    /// 1-based.
    pub fold: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<History>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_coverage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub macro_f1: MeanStd,
    pub uar: MeanStd,
    pub accuracy: MeanStd,
}

/// Cross-validation results. Contains no timing so that reruns with the
/// same inputs serialise identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: ModelKind,
    pub config: TrainConfig,
    pub sessions: usize,
    pub folds: Vec<FoldResult>,
    pub aggregate: Aggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvTiming {
    pub fold_seconds: Vec<f64>,
    pub total_seconds: f64,
}

/// Stratified k-fold cross-validation: the view is applied, each fold gets
/// its own vocabulary, embeddings and model, trained on the other folds and
/// evaluated on the held-out one.
pub fn run_cv(sessions: &[Session], resources: &Resources, config: &TrainConfig) -> Result<(CvReport, CvTiming)> {
    check_inputs(sessions, resources, config)?;
    let start = Instant::now();
    let viewed = sessions
        .iter()
        .map(|s| select_view(s, config.view))
        .collect::<Result<Vec<_>>>()?;
    let labels = viewed.iter().map(Session::require_label).collect::<Result<Vec<_>>>()?;
    let plan = kfold_split(&labels, config.folds, config.seed)?;
    let mut folds = Vec::with_capacity(plan.folds.len());
    let mut fold_seconds = Vec::with_capacity(plan.folds.len());
    for (f, fold) in plan.folds.iter().enumerate() {
        let fold_start = Instant::now();
        let pick = |idx: &[usize]| idx.iter().map(|&i| viewed[i].clone()).collect::<Vec<_>>();
        let (train, validation) = (pick(&fold.train), pick(&fold.validation));
        let fold_seed = seed::derive(config.seed, &[FOLD_STREAM, f as u64]);
        let outcome = train_one(&train, &validation, resources, config, fold_seed)?;
        let preds = outcome.model.predict(&validation, resources.stack)?;
        let truth: Vec<Label> = fold.validation.iter().map(|&i| labels[i]).collect();
        folds.push(FoldResult {
            fold: f + 1,
            train_size: train.len(),
            validation_size: validation.len(),
            metrics: evaluate(&preds, &truth)?,
            history: outcome.history,
            embedding_coverage: outcome.coverage.map(|c| c.fraction),
        });
        fold_seconds.push(fold_start.elapsed().as_secs_f64());
    }
    let collect = |f: fn(&Metrics) -> f64| MeanStd::of(&folds.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    let aggregate = Aggregate {
        macro_f1: collect(|m| m.macro_f1),
        uar: collect(|m| m.uar),
        accuracy: collect(|m| m.accuracy),
    };
    let report = CvReport {
        model: config.model,
        config: config.clone(),
        sessions: sessions.len(),
        folds,
        aggregate,
    };
    let timing = CvTiming {
        fold_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, timing))
}

impl CvReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text table: one row per fold, then mean ± std.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "model: {}  view: {}  folds: {}  sessions: {}",
            self.model.display_name(),
            self.config.view.as_str(),
            self.folds.len(),
            self.sessions
        );
        let _ = writeln!(out, "{:<6} {:>17} {:>17} {:>17} {:>10}", "fold", "macro-F1", "UAR", "accuracy", "best epoch");
        for f in &self.folds {
            let best = f.history.as_ref().map_or("-".to_string(), |h| h.best_epoch.to_string());
            let _ = writeln!(
                out,
                "{:<6} {:>17.4} {:>17.4} {:>17.4} {:>10}",
                f.fold, f.metrics.macro_f1, f.metrics.uar, f.metrics.accuracy, best
            );
        }
        let ms = |m: &MeanStd| format!("{:.4} ± {:.4}", m.mean, m.std);
        let _ = writeln!(
            out,
            "{:<6} {:>17} {:>17} {:>17}",
            "mean",
            ms(&self.aggregate.macro_f1),
            ms(&self.aggregate.uar),
            ms(&self.aggregate.accuracy)
        );
        out
    }
}
