use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, forward_backward, loss, ClassWeights, HanConfig, HanParams, IndexedSession};
use crate::nn::{AdamConfig, AdamState};
use crate::seed;

/// Tracks the best validation loss and counts epochs without strict
/// improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        Ok(Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            stale: 0,
        })
    }

    pub fn observe(&mut self, epoch: usize, validation_loss: f64) -> StopDecision {
        if validation_loss < self.best {
            self.best = validation_loss;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            StopDecision {
                improved: true,
                stop: false,
            }
        } else {
            self.stale += 1;
            StopDecision {
                improved: false,
                stop: self.stale >= self.patience,
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Something trained epoch by epoch and selected on validation loss.
pub trait EpochModel {
    type Snapshot;
    /// Runs one epoch (1-based) and returns the mean training loss.
    fn train_epoch(&mut self, epoch: usize) -> Result<f64>;
    fn validation_loss(&mut self) -> Result<f64>;
    fn snapshot(&self) -> Self::Snapshot;
}

/// Trains for up to `max_epochs`, keeping the snapshot with the lowest
/// validation loss and stopping after `patience` epochs without improvement.
pub fn fit<M: EpochModel>(model: &mut M, max_epochs: usize, patience: usize) -> Result<(M::Snapshot, History)> {
    if max_epochs == 0 {
        return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
    }
    let mut stopper = EarlyStopping::new(patience)?;
    let mut best = None;
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=max_epochs {
        let train_loss = model.train_epoch(epoch)?;
        let validation_loss = model.validation_loss()?;
        if !train_loss.is_finite() || !validation_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "epoch {epoch}: train loss {train_loss}, validation loss {validation_loss}"
            )));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        let decision = stopper.observe(epoch, validation_loss);
        if decision.improved {
            best = Some(model.snapshot());
        }
        if decision.stop && epoch < max_epochs {
            stopped_early = true;
            break;
        }
    }
    let best = best.ok_or_else(|| Error::NonFinite("no epoch produced a finite validation loss".into()))?;
    let history = History {
        epochs,
        best_epoch: stopper.best_epoch().unwrap_or(1),
        stopped_early,
    };
    Ok((best, history))
}

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;

/// Per-sample Adam training of a HAN on indexed sessions.
pub struct HanTrainer<'a> {
    pub config: HanConfig,
    pub params: HanParams,
    grads: HanParams,
    adam: AdamState,
    train: &'a [IndexedSession],
    validation: &'a [IndexedSession],
    weights: ClassWeights,
    seed: u64,
}

impl<'a> HanTrainer<'a> {
    pub fn new(
        config: HanConfig,
        params: HanParams,
        adam: AdamConfig,
        train: &'a [IndexedSession],
        validation: &'a [IndexedSession],
        weights: ClassWeights,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if train.is_empty() || validation.is_empty() {
            return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
        }
        let grads = params.zeros_like();
        let adam = AdamState::new(adam, &params.trainable(config.train_embeddings));
        Ok(Self {
            config,
            params,
            grads,
            adam,
            train,
            validation,
            weights,
            seed,
        })
    }

    /// Mean weighted loss over `sessions` in evaluation mode.
    pub fn mean_loss(&self, sessions: &[IndexedSession]) -> Result<f64> {
        let mut rng = seed::rng(self.seed, &[]);
        let mut total = 0.0;
        for s in sessions {
            let label = s
                .label
                .ok_or_else(|| Error::InvalidArgument(format!("session `{}` has no label", s.id)))?;
            let trace = forward(s, &self.params, &self.config, false, &mut rng)?;
            let l = loss(&trace, label, Some(&self.weights));
            if !l.is_finite() {
                return Err(Error::NonFinite(format!("loss of session `{}`", s.id)));
            }
            total += l;
        }
        Ok(total / sessions.len() as f64)
    }
}

impl EpochModel for HanTrainer<'_> {
    type Snapshot = HanParams;

    fn train_epoch(&mut self, epoch: usize) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut seed::rng(self.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut dropout_rng = seed::rng(self.seed, &[DROPOUT_STREAM, epoch as u64]);
        let train_emb = self.config.train_embeddings;
        let mut total = 0.0;
        for i in order {
            let session = &self.train[i];
            for g in self.grads.trainable_mut(train_emb) {
                g.fill(0.0);
            }
            let out = forward_backward(
                session,
                &self.params,
                &self.config,
                &self.weights,
                true,
                &mut dropout_rng,
                &mut self.grads,
            )
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}: {m}")),
                other => other,
            })?;
            total += out.loss;
            self.adam.step(
                self.params.trainable_mut(train_emb),
                self.grads.trainable(train_emb),
            )?;
        }
        Ok(total / self.train.len() as f64)
    }

    fn validation_loss(&mut self) -> Result<f64> {
        self.mean_loss(self.validation)
    }

    fn snapshot(&self) -> HanParams {
        self.params.clone()
    }
}
