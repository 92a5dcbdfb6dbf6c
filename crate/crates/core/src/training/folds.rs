use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::seed;

/// Indices into the corpus, each list ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

const FOLD_STREAM: u64 = 0x464f_4c44;

/// Stratified k-fold split. Each class is shuffled and dealt round-robin to
/// the folds; the dealing position carries over between classes so fold
/// sizes differ by at most one.
pub fn kfold_split(labels: &[Label], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let mut assignment = vec![0usize; labels.len()];
    let mut position = 0usize;
    for class in Label::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {} has {} samples, fewer than k = {k}",
                class.as_str(),
                members.len()
            )));
        }
        members.shuffle(&mut seed::rng(seed, &[FOLD_STREAM, class.index() as u64]));
        for i in members {
            assignment[i] = position % k;
            position += 1;
        }
    }
    if position == 0 {
        return Err(Error::EmptyCorpus);
    }
    let folds = (0..k)
        .map(|f| Fold {
            train: (0..labels.len()).filter(|&i| assignment[i] != f).collect(),
            validation: (0..labels.len()).filter(|&i| assignment[i] == f).collect(),
        })
        .collect();
    Ok(FoldPlan { folds })
}
