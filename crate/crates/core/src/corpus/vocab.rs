use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Session;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map with PAD and UNK reserved at 0 and 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from non-special tokens, in the given order.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut all = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut index: HashMap<String, usize> = all.iter().cloned().zip(0..).collect();
        for token in tokens {
            if !index.contains_key(&token) {
                index.insert(token.clone(), all.len());
                all.push(token);
            }
        }
        Self { tokens: all, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    /// Number of entries excluding PAD and UNK.
    pub fn regular_len(&self) -> usize {
        self.tokens.len() - 2
    }

    /// Index of `token`, or [`UNK`] when absent.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Non-special entries as `(index, token)`.
    pub fn regular(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens.iter().enumerate().skip(2).map(|(i, t)| (i, t.as_str()))
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Vocabulary::from_tokens(tokens.into_iter().skip(2))
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Counts turn and summary tokens; keeps those seen at least `min_count`
/// times, ordered by descending frequency with lexicographic tie-break.
pub fn build_vocabulary(sessions: &[Session], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    if sessions.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in sessions {
        let summary = s.summary.iter().flatten();
        for token in s.turns.iter().flat_map(|t| t.tokens.iter()).chain(summary) {
            *counts.entry(token.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Speaker, Turn};
    use proptest::prelude::*;

    fn corpus(text: &str) -> Vec<Session> {
        vec![Session {
            id: "x".into(),
            turns: vec![Turn {
                speaker: Speaker::Client,
                tokens: text.split_whitespace().map(String::from).collect(),
            }],
            summary: None,
            label: Some(Label::Depressed),
        }]
    }

    #[test]
    fn min_count_prunes() {
        let v = build_vocabulary(&corpus("a a b"), 2).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.token(PAD), Some(PAD_TOKEN));
        assert_eq!(v.token(UNK), Some(UNK_TOKEN));
        assert_eq!(v.get("a"), Some(2));
        assert_eq!(v.id("b"), UNK);
    }

    #[test]
    fn min_count_one_keeps_all() {
        let v = build_vocabulary(&corpus("a b"), 1).unwrap();
        assert!(v.get("a").is_some() && v.get("b").is_some());
    }

    #[test]
    fn ordering_is_frequency_then_lexicographic() {
        let v = build_vocabulary(&corpus("c b b a a z"), 1).unwrap();
        let order: Vec<_> = v.regular().map(|(_, t)| t).collect();
        assert_eq!(order, ["a", "b", "c", "z"]);
        assert_eq!(v, build_vocabulary(&corpus("c b b a a z"), 1).unwrap());
    }

    #[test]
    fn rejects_empty_corpus_and_zero_min_count() {
        assert!(matches!(build_vocabulary(&[], 1), Err(Error::EmptyCorpus)));
        assert!(build_vocabulary(&corpus("a"), 0).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let v = build_vocabulary(&corpus("x y y"), 1).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }

    proptest! {
        #[test]
        fn index_token_round_trip(words in proptest::collection::vec("[a-e]{1,3}", 1..30)) {
            let v = build_vocabulary(&corpus(&words.join(" ")), 1).unwrap();
            for (i, t) in v.regular() {
                prop_assert_eq!(v.id(t), i);
            }
        }
    }
}
