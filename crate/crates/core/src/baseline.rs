//! Tf-Idf features with a linear SVM trained by stochastic subgradient
//! descent on the regularised hinge loss.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Session};
use crate::error::{Error, Result};

/// Sparse vector with strictly increasing indices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.indices
            .binary_search(&index)
            .map_or(0.0, |p| self.values[p])
    }

    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, v)| w[i] * v).sum()
    }

    pub fn scaled(&self, factor: f64) -> SparseVector {
        SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Document frequencies and smoothed idf over a fitted term list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    terms: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    df: Vec<usize>,
    idf: Vec<f64>,
    n_docs: usize,
}

fn session_tokens(session: &Session) -> impl Iterator<Item = &str> {
    session.turns.iter().flat_map(|t| t.tokens.iter().map(String::as_str))
}

/// Fits document frequencies on turn tokens of `docs`.
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
pub fn tfidf_fit(docs: &[Session]) -> Result<TfIdfModel> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut df_map: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let unique: BTreeSet<&str> = session_tokens(doc).collect();
        for t in unique {
            *df_map.entry(t).or_default() += 1;
        }
    }
    let mut terms: Vec<String> = df_map.keys().map(|s| s.to_string()).collect();
    terms.sort();
    let n = docs.len();
    let df: Vec<usize> = terms.iter().map(|t| df_map[t.as_str()]).collect();
    let idf = df
        .iter()
        .map(|&d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(TfIdfModel {
        terms,
        index,
        df,
        idf,
        n_docs: n,
    })
}

impl TfIdfModel {
    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        if self.index.is_empty() && !self.terms.is_empty() {
            // deserialised model
            return self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok();
        }
        self.index.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.term_index(term).map(|i| self.idf[i])
    }

    pub fn df(&self, term: &str) -> Option<usize> {
        self.term_index(term).map(|i| self.df[i])
    }

    /// Raw-count tf times idf, L2-normalised. Unknown tokens are ignored;
    /// a session without known tokens maps to the zero vector.
    pub fn transform(&self, session: &Session) -> SparseVector {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for t in session_tokens(session) {
            if let Some(i) = self.term_index(t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut pairs: Vec<(usize, f64)> = counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        pairs.sort_by_key(|p| p.0);
        let norm = pairs.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
        if norm > 0.0 {
            pairs.iter_mut().for_each(|p| p.1 /= norm);
        }
        SparseVector {
            indices: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        }
    }
}

pub fn tfidf_transform(model: &TfIdfModel, session: &Session) -> SparseVector {
    model.transform(session)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Hinge-loss weight in `½|w|² + C·Σ hinge`.
    pub c: f64,
    pub epochs: usize,
    /// Value of the constant feature carrying the bias.
    pub bias_feature: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 50,
            bias_feature: 1.0,
            seed: 0,
        }
    }
}

/// Linear decision function `wᵀx + b`; positive scores mean `Depressed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
}

impl LinearSvm {
    pub fn zeros(dim: usize, c: f64) -> Self {
        Self { w: vec![0.0; dim], b: 0.0, c }
    }

    pub fn score(&self, x: &SparseVector) -> f64 {
        x.dot_dense(&self.w) + self.b
    }

    /// Sign of the score; zero resolves to `NotDepressed`.
    pub fn predict(&self, x: &SparseVector) -> Label {
        if self.score(x) > 0.0 {
            Label::Depressed
        } else {
            Label::NotDepressed
        }
    }

    /// `½|w|² + C·Σ max(0, 1 − y(wᵀx + b))`, with the bias regularised
    /// through its constant feature.
    pub fn objective(&self, xs: &[SparseVector], labels: &[Label], bias_feature: f64) -> f64 {
        let wb = if bias_feature != 0.0 { self.b / bias_feature } else { 0.0 };
        let reg = 0.5 * (self.w.iter().map(|v| v * v).sum::<f64>() + wb * wb);
        let hinge: f64 = xs
            .iter()
            .zip(labels)
            .map(|(x, &l)| (1.0 - sign(l) * self.score(x)).max(0.0))
            .sum();
        reg + self.c * hinge
    }
}

fn sign(label: Label) -> f64 {
    match label {
        Label::Depressed => 1.0,
        Label::NotDepressed => -1.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmFit {
    pub model: LinearSvm,
    /// Objective after each epoch.
    pub objective: Vec<f64>,
}

/// Pegasos: with `λ = 1/(C·n)`, step `η_t = 1/(λt)` on one shuffled sample
/// at a time; the returned model is the average of all iterates. The bias
/// is an extra weight on a constant feature of value `bias_feature`.
pub fn svm_train(xs: &[SparseVector], labels: &[Label], dim: usize, config: &SvmConfig) -> Result<SvmFit> {
    if xs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature vectors but {} labels",
            xs.len(),
            labels.len()
        )));
    }
    if xs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !labels.contains(&Label::Depressed) || !labels.contains(&Label::NotDepressed) {
        return Err(Error::InvalidArgument("training set contains a single class".into()));
    }
    if !(config.c > 0.0 && config.c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {}", config.c)));
    }
    if let Some(&bad) = xs.iter().flat_map(|x| &x.indices).find(|&&i| i >= dim) {
        return Err(Error::Shape(format!("feature index {bad} outside dimension {dim}")));
    }

    let n = xs.len();
    let lambda = 1.0 / (config.c * n as f64);
    let bf = config.bias_feature;
    // bias weight stored as the last coordinate
    let mut w = vec![0.0; dim + 1];
    let mut sum = vec![0.0; dim + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut t = 0usize;
    let mut objective = Vec::with_capacity(config.epochs);

    let averaged = |sum: &[f64], t: usize| {
        let k = if t == 0 { 0.0 } else { 1.0 / t as f64 };
        LinearSvm {
            w: sum[..dim].iter().map(|x| x * k).collect(),
            b: sum[dim] * k * bf,
            c: config.c,
        }
    };

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = &xs[i];
            let y = sign(labels[i]);
            let margin = y * (x.dot_dense(&w) + w[dim] * bf);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|c| *c *= shrink);
            if margin < 1.0 {
                for (&j, &xv) in x.indices.iter().zip(&x.values) {
                    w[j] += eta * y * xv;
                }
                w[dim] += eta * y * bf;
            }
            sum.iter_mut().zip(&w).for_each(|(s, v)| *s += v);
        }
        objective.push(averaged(&sum, t).objective(xs, labels, bf));
    }
    let model = averaged(&sum, t);
    if model.w.iter().any(|x| !x.is_finite()) || !model.b.is_finite() {
        return Err(Error::NonFinite("svm weights".into()));
    }
    Ok(SvmFit { model, objective })
}

pub fn svm_predict(model: &LinearSvm, x: &SparseVector) -> Label {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Speaker, Turn};

    fn doc(id: &str, text: &str) -> Session {
        Session {
            id: id.into(),
            turns: vec![Turn {
                speaker: Speaker::Client,
                tokens: text.split_whitespace().map(String::from).collect(),
            }],
            summary: None,
            label: None,
        }
    }

    fn dense(values: &[f64]) -> SparseVector {
        SparseVector {
            indices: (0..values.len()).collect(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn single_document_idf_is_one() {
        let m = tfidf_fit(&[doc("a", "x y y")]).unwrap();
        assert_eq!(m.idf("x"), Some(1.0));
        assert_eq!(m.idf("y"), Some(1.0));
        let v = m.transform(&doc("b", "x y y"));
        let s5 = 5f64.sqrt();
        assert!((v.get(m.term_index("x").unwrap()) - 1.0 / s5).abs() < 1e-15);
        assert!((v.get(m.term_index("y").unwrap()) - 2.0 / s5).abs() < 1e-15);
    }

    #[test]
    fn idf_formula_and_unknown_tokens() {
        let m = tfidf_fit(&[doc("a", "x y"), doc("b", "x"), doc("c", "z")]).unwrap();
        assert!((m.idf("x").unwrap() - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-15);
        assert!((m.idf("y").unwrap() - (2f64.ln() + 1.0)).abs() < 1e-15);
        assert_eq!(m.df("x"), Some(2));
        let v = m.transform(&doc("d", "unseen words only"));
        assert_eq!(v.nnz(), 0);
        let v = m.transform(&doc("e", "y unseen"));
        assert_eq!(v.get(m.term_index("x").unwrap()), 0.0);
        assert!((v.norm() - 1.0).abs() < 1e-15);
        assert_eq!(m.transform(&doc("f", "x y")), m.transform(&doc("g", "x y")));
    }

    #[test]
    fn zero_model_predicts_tie_class() {
        let m = LinearSvm::zeros(3, 1.0);
        assert_eq!(m.predict(&dense(&[1.0, -2.0, 0.5])), Label::NotDepressed);
    }

    fn toy() -> (Vec<SparseVector>, Vec<Label>) {
        let xs = vec![dense(&[2.0, 1.0]), dense(&[1.5, 2.0]), dense(&[-1.0, -1.5]), dense(&[-2.0, -0.5])];
        let ys = vec![Label::Depressed, Label::Depressed, Label::NotDepressed, Label::NotDepressed];
        (xs, ys)
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let (xs, ys) = toy();
        let fit = svm_train(&xs, &ys, 2, &SvmConfig::default()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(fit.model.predict(x), *y);
        }
    }

    #[test]
    fn scaling_features_with_adjusted_c_keeps_predictions() {
        let (xs, ys) = toy();
        let base = SvmConfig {
            c: 0.5,
            epochs: 30,
            bias_feature: 1.0,
            seed: 3,
        };
        let a = svm_train(&xs, &ys, 2, &base).unwrap();
        let scaled: Vec<SparseVector> = xs.iter().map(|x| x.scaled(2.0)).collect();
        let cfg = SvmConfig {
            c: base.c / 4.0,
            bias_feature: 2.0,
            ..base.clone()
        };
        let b = svm_train(&scaled, &ys, 2, &cfg).unwrap();
        for (x, xs2) in xs.iter().zip(&scaled) {
            assert_eq!(a.model.predict(x), b.model.predict(xs2));
            assert!((a.model.score(x) - b.model.score(xs2)).abs() < 1e-9);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let (xs, _) = toy();
        assert!(svm_train(&xs, &[Label::Depressed; 4], 2, &SvmConfig::default()).is_err());
        assert!(svm_train(&xs, &[Label::Depressed; 3], 2, &SvmConfig::default()).is_err());
    }

    #[test]
    fn objective_does_not_increase_on_toy_set() {
        let (xs, ys) = toy();
        let fit = svm_train(&xs, &ys, 2, &SvmConfig { epochs: 40, ..SvmConfig::default() }).unwrap();
        for w in fit.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", fit.objective);
        }
    }
}
