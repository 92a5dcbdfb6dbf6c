//! Deterministic synthetic transcripts with class-dependent rates of
//! affective words, plus toy lexica annotating those words.
//!
//! Words are pronounceable nonsense built from syllables. Each affect
//! category owns a disjoint word pool; at every client token position a
//! category word is drawn with the class's rate for that category, otherwise
//! a neutral base word. Therapist turns use one class-independent rate set.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::AffectCategory;
use crate::corpus::{Label, Session, Speaker, Turn};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::seed;

/// Per-token injection probabilities; they must sum to at most 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryRates {
    pub positive: f64,
    pub negative: f64,
    pub sadness: f64,
    pub anxiety: f64,
}

impl CategoryRates {
    pub fn as_array(&self) -> [f64; 4] {
        [self.positive, self.negative, self.sadness, self.anxiety]
    }

    fn validate(&self, what: &str) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|x| !(0.0..=1.0).contains(x)) || r.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "{what}: rates must lie in [0, 1] and sum to at most 1"
            )));
        }
        Ok(())
    }
}

/// Category names in the order of [`CategoryRates::as_array`].
pub const CATEGORY_NAMES: [&str; 4] = ["positive", "negative", "sadness", "anxiety"];

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.gen_range(self.min..=self.max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub sessions_per_class: usize,
    pub turns_per_session: Span,
    pub tokens_per_turn: Span,
    pub summary_tokens: Span,
    pub base_vocab: usize,
    pub topic_vocab: usize,
    /// Words per affect category.
    pub affect_pool: usize,
    pub depressed: CategoryRates,
    pub not_depressed: CategoryRates,
    pub therapist: CategoryRates,
    /// Fraction of affect words each non-LIWC toy lexicon covers.
    pub lexicon_coverage: f64,
    /// Warn when the client rates of both classes coincide.
    pub require_separable: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Negative and anxiety rates five times higher for the depressed class.
    fn default() -> Self {
        Self {
            sessions_per_class: 200,
            turns_per_session: Span::new(10, 16),
            tokens_per_turn: Span::new(8, 16),
            summary_tokens: Span::new(3, 6),
            base_vocab: 400,
            topic_vocab: 40,
            affect_pool: 150,
            depressed: CategoryRates {
                positive: 0.04,
                negative: 0.10,
                sadness: 0.03,
                anxiety: 0.05,
            },
            not_depressed: CategoryRates {
                positive: 0.06,
                negative: 0.02,
                sadness: 0.03,
                anxiety: 0.01,
            },
            therapist: CategoryRates {
                positive: 0.03,
                negative: 0.03,
                sadness: 0.01,
                anxiety: 0.01,
            },
            lexicon_coverage: 0.7,
            require_separable: true,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, why: &str| Err(Error::InvalidArgument(format!("{f}: {why}")));
        if self.sessions_per_class == 0 {
            return bad("sessions_per_class", "must be at least 1");
        }
        for (name, s) in [
            ("turns_per_session", self.turns_per_session),
            ("tokens_per_turn", self.tokens_per_turn),
            ("summary_tokens", self.summary_tokens),
        ] {
            if s.min == 0 || s.min > s.max {
                return bad(name, "needs 1 <= min <= max");
            }
        }
        if self.base_vocab == 0 || self.topic_vocab == 0 || self.affect_pool == 0 {
            return bad("base_vocab/topic_vocab/affect_pool", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.lexicon_coverage) {
            return bad("lexicon_coverage", "must lie in [0, 1]");
        }
        self.depressed.validate("depressed")?;
        self.not_depressed.validate("not_depressed")?;
        self.therapist.validate("therapist")
    }

    pub fn rates(&self, label: Label) -> &CategoryRates {
        match label {
            Label::Depressed => &self.depressed,
            Label::NotDepressed => &self.not_depressed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub sessions: Vec<Session>,
    /// afinn, semeval15, bingliu, mpqa, emolex, liwc.
    pub lexica: Vec<Lexicon>,
    /// The four affect categories as LIWC columns.
    pub categories: Vec<AffectCategory>,
    /// Word pools per category, in [`CATEGORY_NAMES`] order.
    pub affect_words: Vec<Vec<String>>,
    pub warnings: Vec<String>,
}

const SYLLABLES: [&str; 24] = [
    "ba", "ke", "lo", "mi", "nu", "pa", "re", "si", "to", "vu", "da", "fe", "go", "hi", "ju", "ma", "ne", "ri", "so",
    "ta", "ve", "zo", "ka", "lu",
];

const WORDS_STREAM: u64 = 0x574f_5244;
const LEXICON_STREAM: u64 = 0x4c45_5843;
const SESSION_STREAM: u64 = 0x5345_5353;

fn make_words(n: usize, taken: &mut BTreeSet<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut len = 2;
    let mut attempts = 0;
    while out.len() < n {
        let w: String = (0..len).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        if taken.insert(w.clone()) {
            out.push(w);
            attempts = 0;
        } else {
            attempts += 1;
            if attempts > 50 {
                len += 1;
                attempts = 0;
            }
        }
    }
    out
}

const EMOLEX: [&str; 19] = [
    "anger", "anticipation", "disgust", "fear", "joy", "negative", "positive", "sadness", "surprise", "trust",
    "aux_11", "aux_12", "aux_13", "aux_14", "aux_15", "aux_16", "aux_17", "aux_18", "aux_19",
];
const LIWC_NAMED: [&str; 5] = ["posemo", "negemo", "anx", "anger", "sad"];
const LIWC_DIM: usize = 73;

fn cats(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn liwc_categories() -> Vec<String> {
    let mut c = cats(&LIWC_NAMED);
    c.extend((LIWC_NAMED.len() + 1..=LIWC_DIM).map(|i| format!("cat_{i:02}")));
    c
}

fn one_hot(categories: &[String], on: &[&str]) -> Vec<f64> {
    categories.iter().map(|c| if on.contains(&c.as_str()) { 1.0 } else { 0.0 }).collect()
}

fn build_lexica(
    spec: &SynthSpec,
    affect: &[Vec<String>],
    base: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Lexicon>> {
    let mut afinn = Lexicon::new("afinn", cats(&["valence"]))?;
    let mut semeval = Lexicon::new("semeval15", cats(&["score"]))?;
    let mut bingliu = Lexicon::new("bingliu", cats(&["polarity"]))?;
    let mut mpqa = Lexicon::new("mpqa", cats(&["positive", "negative", "neutral", "both"]))?;
    let mut emolex = Lexicon::new("emolex", cats(&EMOLEX))?;
    let mut liwc = Lexicon::new("liwc", liwc_categories())?;

    for (c, words) in affect.iter().enumerate() {
        let positive = c == 0;
        let sign = if positive { 1.0 } else { -1.0 };
        let liwc_on: &[&str] = match c {
            0 => &["posemo"],
            1 => &["negemo"],
            2 => &["sad"],
            _ => &["anx"],
        };
        let emo_on: &[&str] = match c {
            0 => &["positive", "joy", "trust"],
            1 => &["negative", "anger", "disgust"],
            2 => &["negative", "sadness"],
            _ => &["negative", "fear"],
        };
        for w in words {
            liwc.insert(w, one_hot(&liwc.categories, liwc_on))?;
            if rng.gen_bool(spec.lexicon_coverage) {
                afinn.insert(w, vec![sign * rng.gen_range(1..=3) as f64])?;
            }
            if rng.gen_bool(spec.lexicon_coverage) {
                semeval.insert(w, vec![sign * rng.gen_range(0.2..1.0)])?;
            }
            if rng.gen_bool(spec.lexicon_coverage) {
                bingliu.insert(w, vec![sign])?;
            }
            if rng.gen_bool(spec.lexicon_coverage) {
                let on = if positive { "positive" } else { "negative" };
                mpqa.insert(w, one_hot(&mpqa.categories, &[on]))?;
            }
            if rng.gen_bool(spec.lexicon_coverage) {
                emolex.insert(w, one_hot(&emolex.categories, emo_on))?;
            }
        }
    }
    // some neutral words carry non-affective LIWC categories
    for w in base {
        if rng.gen_bool(0.3) {
            let mut v = vec![0.0; LIWC_DIM];
            v[rng.gen_range(LIWC_NAMED.len()..LIWC_DIM)] = 1.0;
            liwc.insert(w, v)?;
        }
        if rng.gen_bool(0.1) {
            mpqa.insert(w, one_hot(&mpqa.categories, &["neutral"]))?;
        }
    }
    Ok(vec![afinn, semeval, bingliu, mpqa, emolex, liwc])
}

fn draw_token<'a>(
    rates: &CategoryRates,
    affect: &'a [Vec<String>],
    base: &'a [String],
    rng: &mut ChaCha8Rng,
) -> &'a str {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (c, r) in rates.as_array().into_iter().enumerate() {
        acc += r;
        if u < acc {
            return affect[c].choose(rng).expect("non-empty pool");
        }
    }
    base.choose(rng).expect("non-empty base vocabulary")
}

/// Generates the corpus and its lexica. Sessions alternate between classes
/// (depressed first); turns alternate speakers starting with the therapist.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut warnings = Vec::new();
    if spec.require_separable && spec.depressed == spec.not_depressed {
        warnings.push("client rates are identical for both classes; classes are not separable".to_string());
    }

    let mut rng = seed::rng(spec.seed, &[WORDS_STREAM]);
    let mut taken = BTreeSet::new();
    let base = make_words(spec.base_vocab, &mut taken, &mut rng);
    let topics = make_words(spec.topic_vocab, &mut taken, &mut rng);
    let affect: Vec<Vec<String>> = (0..4).map(|_| make_words(spec.affect_pool, &mut taken, &mut rng)).collect();

    let lexica = build_lexica(spec, &affect, &base, &mut seed::rng(spec.seed, &[LEXICON_STREAM]))?;

    let n = 2 * spec.sessions_per_class;
    let width = n.to_string().len();
    let sessions = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Depressed } else { Label::NotDepressed };
            let mut rng = seed::rng(spec.seed, &[SESSION_STREAM, i as u64]);
            let turns = (0..spec.turns_per_session.sample(&mut rng))
                .map(|k| {
                    let speaker = if k % 2 == 0 { Speaker::Therapist } else { Speaker::Client };
                    let rates = match speaker {
                        Speaker::Therapist => &spec.therapist,
                        Speaker::Client => spec.rates(label),
                    };
                    let tokens = (0..spec.tokens_per_turn.sample(&mut rng))
                        .map(|_| draw_token(rates, &affect, &base, &mut rng).to_string())
                        .collect();
                    Turn { speaker, tokens }
                })
                .collect();
            let summary = (0..spec.summary_tokens.sample(&mut rng))
                .map(|_| topics.choose(&mut rng).expect("non-empty topics").clone())
                .collect();
            Session {
                id: format!("synth-{i:0width$}"),
                turns,
                summary: Some(summary),
                label: Some(label),
            }
        })
        .collect();

    let categories = CATEGORY_NAMES
        .iter()
        .zip(["posemo", "negemo", "sad", "anx"])
        .map(|(name, col)| AffectCategory::new(name, "liwc", col))
        .collect();
    Ok(SynthCorpus {
        sessions,
        lexica,
        categories,
        affect_words: affect,
        warnings,
    })
}

/// Three short labelled sessions with summaries and the six toy lexica;
/// small enough for exhaustive gradient checks.
pub fn toy_corpus() -> Result<SynthCorpus> {
    let spec = SynthSpec {
        sessions_per_class: 2,
        turns_per_session: Span::new(3, 4),
        tokens_per_turn: Span::new(3, 5),
        summary_tokens: Span::new(2, 3),
        base_vocab: 30,
        topic_vocab: 8,
        affect_pool: 6,
        depressed: CategoryRates {
            positive: 0.1,
            negative: 0.3,
            sadness: 0.1,
            anxiety: 0.1,
        },
        ..SynthSpec::default()
    };
    let mut corpus = generate(&spec)?;
    corpus.sessions.truncate(3);
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_session_jsonl, write_session_jsonl, ParseOptions};
    use crate::lexicon::stack_lexica;

    fn small() -> SynthSpec {
        SynthSpec {
            sessions_per_class: 6,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = write_session_jsonl(&generate(&small()).unwrap().sessions).unwrap();
        let b = write_session_jsonl(&generate(&small()).unwrap().sessions).unwrap();
        assert_eq!(a, b);
        let c = write_session_jsonl(&generate(&SynthSpec { seed: 1, ..small() }).unwrap().sessions).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn toy_stack_is_99_dimensional() {
        let corpus = generate(&small()).unwrap();
        let dims: Vec<usize> = corpus.lexica.iter().map(|l| l.dim).collect();
        assert_eq!(dims, vec![1, 1, 1, 4, 19, 73]);
        assert_eq!(stack_lexica(corpus.lexica).unwrap().total_dim(), 99);
    }

    #[test]
    fn zero_rate_means_no_category_tokens() {
        let spec = SynthSpec {
            not_depressed: CategoryRates {
                positive: 0.0,
                negative: 0.0,
                sadness: 0.0,
                anxiety: 0.0,
            },
            ..small()
        };
        let corpus = generate(&spec).unwrap();
        let affect: BTreeSet<&str> = corpus.affect_words.iter().flatten().map(String::as_str).collect();
        for s in corpus.sessions.iter().filter(|s| s.label == Some(Label::NotDepressed)) {
            for t in s.turns.iter().filter(|t| t.speaker == Speaker::Client) {
                assert!(t.tokens.iter().all(|w| !affect.contains(w.as_str())));
            }
        }
    }

    #[test]
    fn round_trips_through_jsonl() {
        let corpus = generate(&small()).unwrap();
        let text = write_session_jsonl(&corpus.sessions).unwrap();
        let back = parse_session_jsonl(text.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(back, corpus.sessions);
    }

    #[test]
    fn identical_rates_warn_when_asked() {
        let spec = SynthSpec {
            not_depressed: SynthSpec::default().depressed,
            ..small()
        };
        assert_eq!(generate(&spec).unwrap().warnings.len(), 1);
        let quiet = SynthSpec {
            require_separable: false,
            ..spec
        };
        assert!(generate(&quiet).unwrap().warnings.is_empty());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small();
        s.tokens_per_turn = Span::new(5, 2);
        assert!(generate(&s).is_err());
        let mut s = small();
        s.depressed.negative = 0.9;
        s.depressed.positive = 0.5;
        assert!(generate(&s).is_err());
    }
}
