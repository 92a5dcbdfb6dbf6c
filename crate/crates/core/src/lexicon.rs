//! Affective lexica in a normalised TSV format and their concatenation into
//! a fixed per-word annotation space.
//!
//! File format: a header `#name<TAB>dim<TAB>cat_1 .. cat_dim` followed by
//! one `word<TAB>v_1 .. v_dim` row per entry.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub name: String,
    pub dim: usize,
    pub categories: Vec<String>,
    entries: BTreeMap<String, Vec<f64>>,
}

impl Lexicon {
    pub fn new(name: impl Into<String>, categories: Vec<String>) -> Result<Self> {
        let name = name.into();
        if categories.is_empty() {
            return Err(Error::InvalidArgument(format!("lexicon `{name}` has no categories")));
        }
        Ok(Self {
            name,
            dim: categories.len(),
            categories,
            entries: BTreeMap::new(),
        })
    }

    /// Adds an entry; the word is lowercased.
    pub fn insert(&mut self, word: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::Shape(format!(
                "lexicon `{}` has dim {}, entry `{word}` has {} values",
                self.name,
                self.dim,
                values.len()
            )));
        }
        let key = word.to_lowercase();
        if self.entries.contains_key(&key) {
            return Err(Error::InvalidArgument(format!(
                "duplicate word `{key}` in lexicon `{}`",
                self.name
            )));
        }
        self.entries.insert(key, values);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn category_index(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    /// Rescales each dimension to [-1, 1] using the min and max over
    /// entries. Constant dimensions map to 0.
    pub fn min_max_scaled(&self) -> Lexicon {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for v in self.entries.values() {
            for d in 0..self.dim {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| {
                let scaled = (0..self.dim)
                    .map(|d| {
                        let span = hi[d] - lo[d];
                        if span > 0.0 {
                            2.0 * (v[d] - lo[d]) / span - 1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (k.clone(), scaled)
            })
            .collect();
        Lexicon {
            entries,
            ..self.clone()
        }
    }

    pub fn parse(text: &str) -> Result<Lexicon> {
        let ctx = "lexicon";
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (header_idx, header) = lines
            .next()
            .ok_or_else(|| Error::parse(ctx, 1, "missing header"))?;
        let header_no = header_idx + 1;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::parse(ctx, header_no, "header must start with `#`"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() < 2 {
            return Err(Error::parse(ctx, header_no, "header needs name and dim"));
        }
        let dim: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(ctx, header_no, format!("invalid dim `{}`", fields[1])))?;
        let categories: Vec<String> = fields[2..].iter().map(|s| s.trim().to_string()).collect();
        if dim == 0 || categories.len() != dim {
            return Err(Error::parse(
                ctx,
                header_no,
                format!("dim {dim} but {} category names", categories.len()),
            ));
        }
        let mut lexicon = Lexicon::new(fields[0].trim(), categories)?;

        for (i, line) in lines {
            let line_no = i + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != dim + 1 {
                return Err(Error::parse(
                    ctx,
                    line_no,
                    format!("expected {} fields, found {}", dim + 1, fields.len()),
                ));
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(ctx, line_no, e.to_string()))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(ctx, line_no, "non-finite value"));
            }
            let word = fields[0].trim().to_lowercase();
            if lexicon.contains(&word) {
                return Err(Error::parse(ctx, line_no, format!("duplicate word `{word}`")));
            }
            lexicon.entries.insert(word, values);
        }
        Ok(lexicon)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("#{}\t{}\t{}\n", self.name, self.dim, self.categories.join("\t"));
        for (word, values) in &self.entries {
            out.push_str(word);
            for v in values {
                out.push('\t');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Lexicon::parse(&text)
}

/// Ordered lexica laid out back to back in one annotation space.
#[derive(Clone, Debug, PartialEq)]
pub struct LexiconStack {
    lexica: Vec<Lexicon>,
    offsets: Vec<usize>,
    total_dim: usize,
}

pub fn stack_lexica(lexica: Vec<Lexicon>) -> Result<LexiconStack> {
    if lexica.is_empty() {
        return Err(Error::InvalidArgument("a lexicon stack needs at least one lexicon".into()));
    }
    for (i, a) in lexica.iter().enumerate() {
        if lexica[..i].iter().any(|b| b.name == a.name) {
            return Err(Error::InvalidArgument(format!("duplicate lexicon name `{}`", a.name)));
        }
    }
    let mut offsets = Vec::with_capacity(lexica.len());
    let mut total_dim = 0;
    for l in &lexica {
        offsets.push(total_dim);
        total_dim += l.dim;
    }
    Ok(LexiconStack {
        lexica,
        offsets,
        total_dim,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LexiconCoverage {
    /// Vocabulary entries with a nonzero context vector.
    pub covered_count: usize,
    pub fraction: f64,
    /// Entries present in each lexicon, in stack order.
    pub per_lexicon: Vec<(String, usize)>,
}

impl LexiconStack {
    pub fn lexica(&self) -> &[Lexicon] {
        &self.lexica
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn min_max_scaled(&self) -> LexiconStack {
        LexiconStack {
            lexica: self.lexica.iter().map(Lexicon::min_max_scaled).collect(),
            ..self.clone()
        }
    }

    /// Writes the context vector of `word` into `out` (length `total_dim`).
    /// Lexica without an entry leave their segment at zero.
    pub fn write_context(&self, word: &str, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.total_dim);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (lex, &off) in self.lexica.iter().zip(&self.offsets) {
            if let Some(values) = lex.get(word) {
                out[off..off + lex.dim].copy_from_slice(values);
            }
        }
    }

    pub fn context_vector(&self, word: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.total_dim];
        self.write_context(word, &mut out);
        out
    }

    /// Global column of `category` in lexicon `lexicon`.
    pub fn column(&self, lexicon: &str, category: &str) -> Result<usize> {
        let (idx, lex) = self
            .lexica
            .iter()
            .enumerate()
            .find(|(_, l)| l.name == lexicon)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown lexicon `{lexicon}`")))?;
        let col = lex.category_index(category).ok_or_else(|| {
            Error::InvalidArgument(format!("lexicon `{lexicon}` has no category `{category}`"))
        })?;
        Ok(self.offsets[idx] + col)
    }

    pub fn coverage(&self, vocab: &Vocabulary) -> LexiconCoverage {
        let mut per = vec![0usize; self.lexica.len()];
        let mut covered = 0;
        let mut buf = vec![0.0; self.total_dim];
        for (_, token) in vocab.regular() {
            for (count, lex) in per.iter_mut().zip(&self.lexica) {
                if lex.contains(token) {
                    *count += 1;
                }
            }
            self.write_context(token, &mut buf);
            if buf.iter().any(|&v| v != 0.0) {
                covered += 1;
            }
        }
        let total = vocab.regular_len();
        LexiconCoverage {
            covered_count: covered,
            fraction: if total == 0 { 0.0 } else { covered as f64 / total as f64 },
            per_lexicon: self.lexica.iter().map(|l| l.name.clone()).zip(per).collect(),
        }
    }
}
