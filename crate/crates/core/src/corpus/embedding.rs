use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const DEFAULT_EMBEDDING_DIM: usize = 300;
const INIT_BOUND: f64 = 0.05;

/// |V|×dim embedding matrix. Row [`PAD`] is always zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub trainable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmbeddingCoverage {
    pub matched: usize,
    pub total: usize,
    pub fraction: f64,
}

impl EmbeddingTable {
    /// Every row except PAD drawn from uniform(-0.05, 0.05).
    pub fn random<R: Rng>(vocab: &Vocabulary, dim: usize, rng: &mut R) -> Self {
        let mut matrix = Tensor::zeros(&[vocab.len(), dim]);
        for row in 1..vocab.len() {
            for x in matrix.row_mut(row) {
                *x = rng.gen_range(-INIT_BOUND..INIT_BOUND);
            }
        }
        Self {
            matrix,
            trainable: false,
        }
    }

    /// Copies pretrained rows for matched tokens and draws the rest at random.
    pub fn from_pretrained<R: Rng>(
        vectors: &PretrainedVectors,
        vocab: &Vocabulary,
        rng: &mut R,
    ) -> (Self, EmbeddingCoverage) {
        let dim = vectors.dim;
        let mut matrix = Tensor::zeros(&[vocab.len(), dim]);
        let mut matched = 0;
        for row in 1..vocab.len() {
            let token = vocab.token(row).expect("row within vocabulary");
            let pretrained = if row >= 2 { vectors.get(token) } else { None };
            let dst = matrix.row_mut(row);
            match pretrained {
                Some(v) => {
                    dst.copy_from_slice(v);
                    matched += 1;
                }
                None => {
                    for x in dst {
                        *x = rng.gen_range(-INIT_BOUND..INIT_BOUND);
                    }
                }
            }
        }
        let total = vocab.regular_len();
        let coverage = EmbeddingCoverage {
            matched,
            total,
            fraction: if total == 0 { 0.0 } else { matched as f64 / total as f64 },
        };
        debug_assert!(matrix.row(PAD).iter().all(|&x| x == 0.0));
        (
            Self {
                matrix,
                trainable: false,
            },
            coverage,
        )
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// Word vectors read from a `token v1 .. vD` text file.
#[derive(Clone, Debug, Default)]
pub struct PretrainedVectors {
    dim: usize,
    exact: HashMap<String, Vec<f64>>,
    folded: HashMap<String, Vec<f64>>,
}

impl PretrainedVectors {
    /// Parses the whole file, validating every line's arity. When `keep` is
    /// given only those (lowercased) tokens are retained in memory.
    pub fn parse(text: &str, dim: usize, keep: Option<&HashSet<String>>) -> Result<Self> {
        let mut vectors = Self {
            dim,
            ..Self::default()
        };
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let Some(token) = fields.next() else { continue };
            let values = fields
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse("embeddings", line_no, e.to_string()))?;
            if values.len() != dim {
                return Err(Error::parse(
                    "embeddings",
                    line_no,
                    format!("expected {dim} values, found {}", values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse("embeddings", line_no, "non-finite value"));
            }
            let lower = token.to_lowercase();
            if keep.is_some_and(|k| !k.contains(&lower)) {
                continue;
            }
            if lower == token {
                vectors.exact.entry(lower).or_insert(values);
            } else {
                vectors.folded.entry(lower).or_insert(values);
            }
        }
        Ok(vectors)
    }

    pub fn load(path: &Path, dim: usize, keep: Option<&HashSet<String>>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, dim, keep)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Exact lowercase entry first, otherwise the first cased variant.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.exact
            .get(token)
            .or_else(|| self.folded.get(token))
            .map(Vec::as_slice)
    }
}

pub fn load_embeddings<R: Rng>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<(EmbeddingTable, EmbeddingCoverage)> {
    let keep: HashSet<String> = vocab.regular().map(|(_, t)| t.to_string()).collect();
    let vectors = PretrainedVectors::load(path, dim, Some(&keep))?;
    Ok(EmbeddingTable::from_pretrained(&vectors, vocab, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(["sad", "happy", "table"].map(String::from))
    }

    #[test]
    fn copies_matched_rows_and_zeroes_pad() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "sad 0.1 0.2 0.3").unwrap();
        writeln!(file, "Happy 1 2 3").unwrap();
        writeln!(file, "other 9 9 9").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (table, cov) = load_embeddings(file.path(), &vocab(), 3, &mut rng).unwrap();
        assert_eq!(table.matrix.row(2), &[0.1, 0.2, 0.3]);
        assert_eq!(table.matrix.row(3), &[1.0, 2.0, 3.0]);
        assert!(table.matrix.row(PAD).iter().all(|&x| x == 0.0));
        assert!(table.matrix.row(4).iter().all(|x| x.abs() < 0.05));
        assert_eq!(cov.matched, 2);
        assert_eq!(cov.total, 3);
        assert!((cov.fraction - 2.0 / 3.0).abs() < 1e-15);
        assert!(!table.trainable);
    }

    #[test]
    fn exact_case_wins_over_folded() {
        let v = PretrainedVectors::parse("Sad 1 1\nsad 2 2\n", 2, None).unwrap();
        assert_eq!(v.get("sad"), Some(&[2.0, 2.0][..]));
    }

    #[test]
    fn dimension_mismatch_names_line() {
        let text = "a 1 2 3\nb 1 2\n";
        match PretrainedVectors::parse(text, 3, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn random_table_is_seeded() {
        let a = EmbeddingTable::random(&vocab(), 4, &mut ChaCha8Rng::seed_from_u64(3));
        let b = EmbeddingTable::random(&vocab(), 4, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.matrix.row(PAD).iter().all(|&x| x == 0.0));
    }
}
