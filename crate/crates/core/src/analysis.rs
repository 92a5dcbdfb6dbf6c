//! Corpus statistics: turn lengths, per-class vocabulary and affective word
//! usage.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Session, Speaker, View};
use crate::error::{Error, Result};
use crate::lexicon::LexiconStack;

/// A named affect category backed by one lexicon column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffectCategory {
    pub name: String,
    pub lexicon: String,
    pub category: String,
}

impl AffectCategory {
    pub fn new(name: &str, lexicon: &str, category: &str) -> Self {
        Self {
            name: name.into(),
            lexicon: lexicon.into(),
            category: category.into(),
        }
    }
}

/// positive, negative, sadness and anxiety mapped onto LIWC columns.
pub fn default_categories() -> Vec<AffectCategory> {
    vec![
        AffectCategory::new("positive", "liwc", "posemo"),
        AffectCategory::new("negative", "liwc", "negemo"),
        AffectCategory::new("sadness", "liwc", "sad"),
        AffectCategory::new("anxiety", "liwc", "anx"),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnStats {
    pub sessions: usize,
    pub avg_turns_per_session: f64,
    pub avg_tokens_per_turn: f64,
    pub avg_tokens_client: f64,
    pub avg_tokens_therapist: f64,
    /// Set when a speaker has no turns and its average is reported as 0.
    pub warnings: Vec<String>,
}

fn mean(total: usize, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        total as f64 / count as f64
    }
}

pub fn turn_stats(sessions: &[Session]) -> Result<TurnStats> {
    if sessions.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut turns = [0usize; 2];
    let mut tokens = [0usize; 2];
    for turn in sessions.iter().flat_map(|s| &s.turns) {
        let k = (turn.speaker == Speaker::Client) as usize;
        turns[k] += 1;
        tokens[k] += turn.tokens.len();
    }
    let mut warnings = Vec::new();
    for (k, who) in [(0, "therapist"), (1, "client")] {
        if turns[k] == 0 {
            warnings.push(format!("no {who} turns; {who} average reported as 0"));
        }
    }
    let all_turns = turns[0] + turns[1];
    Ok(TurnStats {
        sessions: sessions.len(),
        avg_turns_per_session: mean(all_turns, sessions.len()),
        avg_tokens_per_turn: mean(tokens[0] + tokens[1], all_turns),
        avg_tokens_client: mean(tokens[1], turns[1]),
        avg_tokens_therapist: mean(tokens[0], turns[0]),
        warnings,
    })
}

fn resolve(stack: &LexiconStack, categories: &[AffectCategory]) -> Result<Vec<usize>> {
    categories.iter().map(|c| stack.column(&c.lexicon, &c.category)).collect()
}

fn member(stack: &LexiconStack, columns: &[usize], word: &str, buf: &mut [f64]) -> Vec<bool> {
    buf.iter_mut().for_each(|x| *x = 0.0);
    stack.write_context(word, buf);
    columns.iter().map(|&c| buf[c] != 0.0).collect()
}

fn class_tokens<'a>(sessions: &'a [Session], label: Label, view: View) -> impl Iterator<Item = &'a str> + 'a {
    sessions
        .iter()
        .filter(move |s| s.label == Some(label))
        .flat_map(|s| &s.turns)
        .filter(move |t| view.includes(t.speaker))
        .flat_map(|t| t.tokens.iter().map(String::as_str))
}

fn require_labels(sessions: &[Session]) -> Result<()> {
    if sessions.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    sessions.iter().try_for_each(|s| s.require_label().map(|_| ()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassVocab {
    pub label: Label,
    pub samples: usize,
    /// Turns of the analysed speaker(s).
    pub total_turns: usize,
    pub vocab_size: usize,
    pub affective_word_count: usize,
    pub affective_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassVocabStats {
    pub view: View,
    pub classes: Vec<ClassVocab>,
}

/// Distinct words per class over the `view` turns; a word is affective when
/// any selected category column is nonzero for it.
pub fn class_vocab_stats(
    sessions: &[Session],
    stack: &LexiconStack,
    categories: &[AffectCategory],
    view: View,
) -> Result<ClassVocabStats> {
    require_labels(sessions)?;
    let columns = resolve(stack, categories)?;
    let mut buf = vec![0.0; stack.total_dim()];
    let classes = Label::ALL
        .into_iter()
        .map(|label| {
            let vocab: BTreeSet<&str> = class_tokens(sessions, label, view).collect();
            let affective = vocab
                .iter()
                .filter(|w| member(stack, &columns, w, &mut buf).into_iter().any(|m| m))
                .count();
            let in_class = || sessions.iter().filter(|s| s.label == Some(label));
            ClassVocab {
                label,
                samples: in_class().count(),
                total_turns: in_class()
                    .flat_map(|s| &s.turns)
                    .filter(|t| view.includes(t.speaker))
                    .count(),
                vocab_size: vocab.len(),
                affective_word_count: affective,
                affective_fraction: mean(affective, vocab.len()),
            }
        })
        .collect();
    Ok(ClassVocabStats { view, classes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: String,
    pub occurrences: usize,
    pub fraction_of_tokens: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassOccurrence {
    pub label: Label,
    pub total_tokens: usize,
    pub categories: Vec<CategoryCount>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryOccurrence {
    pub view: View,
    pub classes: Vec<ClassOccurrence>,
}

/// Token occurrences (with multiplicity) of each category over the `view`
/// turns, divided by the class's token total.
pub fn category_occurrence(
    sessions: &[Session],
    stack: &LexiconStack,
    categories: &[AffectCategory],
    view: View,
) -> Result<CategoryOccurrence> {
    require_labels(sessions)?;
    let columns = resolve(stack, categories)?;
    let mut buf = vec![0.0; stack.total_dim()];
    let classes = Label::ALL
        .into_iter()
        .map(|label| {
            let mut counts = vec![0usize; categories.len()];
            let mut total = 0;
            for token in class_tokens(sessions, label, view) {
                total += 1;
                for (c, m) in member(stack, &columns, token, &mut buf).into_iter().enumerate() {
                    counts[c] += m as usize;
                }
            }
            ClassOccurrence {
                label,
                total_tokens: total,
                categories: categories
                    .iter()
                    .zip(counts)
                    .map(|(cat, n)| CategoryCount {
                        category: cat.name.clone(),
                        occurrences: n,
                        fraction_of_tokens: mean(n, total),
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(CategoryOccurrence { view, classes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub turn_stats: TurnStats,
    pub vocabulary: ClassVocabStats,
    pub occurrence: CategoryOccurrence,
}

pub fn analyze(
    sessions: &[Session],
    stack: &LexiconStack,
    categories: &[AffectCategory],
    view: View,
) -> Result<AnalysisReport> {
    Ok(AnalysisReport {
        turn_stats: turn_stats(sessions)?,
        vocabulary: class_vocab_stats(sessions, stack, categories, view)?,
        occurrence: category_occurrence(sessions, stack, categories, view)?,
    })
}

impl AnalysisReport {
    /// Three aligned tables: turn statistics, class vocabulary and category
    /// percentages.
    pub fn to_table(&self) -> String {
        let t = &self.turn_stats;
        let mut out = String::new();
        let _ = writeln!(out, "Turn statistics ({} sessions)", t.sessions);
        for (name, v) in [
            ("avg turns/session", t.avg_turns_per_session),
            ("avg tokens/turn", t.avg_tokens_per_turn),
            ("avg tokens/turn (client)", t.avg_tokens_client),
            ("avg tokens/turn (therapist)", t.avg_tokens_therapist),
        ] {
            let _ = writeln!(out, "  {name:<28} {v:>10.2}");
        }
        for w in &t.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }

        let name = |l: Label| match l {
            Label::Depressed => "depressed",
            Label::NotDepressed => "not depressed",
        };
        let _ = writeln!(out, "\nVocabulary by class (view: {})", self.vocabulary.view.as_str());
        let _ = writeln!(
            out,
            "  {:<14} {:>8} {:>8} {:>8} {:>10} {:>10}",
            "class", "samples", "turns", "vocab", "affective", "affect %"
        );
        for c in &self.vocabulary.classes {
            let _ = writeln!(
                out,
                "  {:<14} {:>8} {:>8} {:>8} {:>10} {:>9.2}%",
                name(c.label),
                c.samples,
                c.total_turns,
                c.vocab_size,
                c.affective_word_count,
                100.0 * c.affective_fraction
            );
        }

        let _ = writeln!(out, "\nAffective category occurrence (% of tokens)");
        let _ = write!(out, "  {:<14}", "category");
        for c in &self.occurrence.classes {
            let _ = write!(out, " {:>14}", name(c.label));
        }
        let _ = writeln!(out);
        let n = self.occurrence.classes.first().map_or(0, |c| c.categories.len());
        for i in 0..n {
            let _ = write!(out, "  {:<14}", self.occurrence.classes[0].categories[i].category);
            for c in &self.occurrence.classes {
                let _ = write!(out, " {:>13.2}%", 100.0 * c.categories[i].fraction_of_tokens);
            }
            let _ = writeln!(out);
        }
        out
    }
}
