use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

/// `counts[true][predicted]`, indexed by [`Label::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_predictions(preds: &[Label], labels: &[Label]) -> Self {
        let mut counts = [[0; 2]; 2];
        for (p, l) in preds.iter().zip(labels) {
            counts[l.index()][p.index()] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn true_count(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn predicted_count(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: ConfusionMatrix,
    /// Per class, in [`Label::index`] order.
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub uar: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 per class, their macro averages and accuracy.
/// Undefined ratios (empty denominators) count as 0.
pub fn evaluate(preds: &[Label], labels: &[Label]) -> Result<Metrics> {
    if preds.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("no predictions to evaluate".into()));
    }
    let confusion = ConfusionMatrix::from_predictions(preds, labels);
    let per_class: Vec<ClassMetrics> = (0..2)
        .map(|c| {
            let tp = confusion.counts[c][c];
            let precision = ratio(tp, confusion.predicted_count(c));
            let recall = ratio(tp, confusion.true_count(c));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: confusion.true_count(c),
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / 2.0;
    let uar = per_class.iter().map(|m| m.recall).sum::<f64>() / 2.0;
    let accuracy = ratio(confusion.counts[0][0] + confusion.counts[1][1], confusion.total());
    Ok(Metrics {
        confusion,
        per_class,
        macro_f1,
        uar,
        accuracy,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(v: &[usize]) -> Vec<Label> {
        v.iter().map(|&i| Label::from_index(i).unwrap()).collect()
    }

    #[test]
    fn hand_example() {
        let m = evaluate(&labels(&[1, 0, 0, 0]), &labels(&[1, 1, 0, 0])).unwrap();
        assert!((m.per_class[1].recall - 0.5).abs() < 1e-12);
        assert!((m.per_class[0].recall - 1.0).abs() < 1e-12);
        assert!((m.per_class[0].precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.per_class[1].precision - 1.0).abs() < 1e-12);
        assert!((m.macro_f1 - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((m.uar - 0.75).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_constant_predictions() {
        let y = labels(&[0, 1, 1, 0]);
        let m = evaluate(&y, &y).unwrap();
        assert_eq!((m.macro_f1, m.uar, m.accuracy), (1.0, 1.0, 1.0));
        let m = evaluate(&labels(&[1, 1, 1, 1]), &y).unwrap();
        assert_eq!(m.uar, 0.5);
        assert_eq!(m.per_class[0].f1, 0.0);
    }

    #[test]
    fn length_mismatch_and_empty() {
        assert!(evaluate(&labels(&[0]), &labels(&[0, 1])).is_err());
        assert!(evaluate(&[], &[]).is_err());
    }

    #[test]
    fn population_std() {
        let s = MeanStd::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }

    proptest! {
        #[test]
        fn invariant_under_class_swap(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..40)) {
            let p: Vec<usize> = pairs.iter().map(|x| x.0).collect();
            let l: Vec<usize> = pairs.iter().map(|x| x.1).collect();
            let a = evaluate(&labels(&p), &labels(&l)).unwrap();
            let flip = |v: &[usize]| labels(&v.iter().map(|x| 1 - x).collect::<Vec<_>>());
            let b = evaluate(&flip(&p), &flip(&l)).unwrap();
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
            prop_assert!((a.uar - b.uar).abs() < 1e-12);
            for v in [a.macro_f1, a.uar, a.accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
