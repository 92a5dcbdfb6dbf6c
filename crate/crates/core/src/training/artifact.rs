use serde::{Deserialize, Serialize};

use super::cv::TrainedModel;
use crate::baseline::{LinearSvm, TfIdfModel};
use crate::corpus::{View, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{HanConfig, HanParams, Limits};
use crate::nn::Checkpoint;

/// A trained model in serialisable form, together with everything needed
/// to apply it to new sessions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelArtifact {
    Han {
        view: View,
        config: HanConfig,
        limits: Limits,
        vocab: Vocabulary,
        params: Checkpoint,
    },
    Svm {
        view: View,
        tfidf: TfIdfModel,
        svm: LinearSvm,
    },
}

impl ModelArtifact {
    pub fn from_trained(model: &TrainedModel, view: View) -> Self {
        match model {
            TrainedModel::Han {
                config,
                vocab,
                params,
                limits,
            } => ModelArtifact::Han {
                view,
                config: config.clone(),
                limits: *limits,
                vocab: vocab.clone(),
                params: Checkpoint::from_params(params),
            },
            TrainedModel::Svm { tfidf, svm } => ModelArtifact::Svm {
                view,
                tfidf: tfidf.clone(),
                svm: svm.clone(),
            },
        }
    }

    pub fn view(&self) -> View {
        match self {
            ModelArtifact::Han { view, .. } | ModelArtifact::Svm { view, .. } => *view,
        }
    }

    pub fn conditioning(&self) -> bool {
        matches!(self, ModelArtifact::Han { config, .. } if config.conditioning)
    }

    pub fn into_trained(self) -> Result<TrainedModel> {
        match self {
            ModelArtifact::Han {
                config,
                limits,
                vocab,
                params,
                ..
            } => {
                config.validate()?;
                let mut p = HanParams::zeros(&config, vocab.len());
                params.restore_into(&mut p)?;
                Ok(TrainedModel::Han {
                    config,
                    vocab,
                    params: p,
                    limits,
                })
            }
            ModelArtifact::Svm { tfidf, svm, .. } => {
                if svm.w.len() != tfidf.dim() {
                    return Err(Error::Checkpoint(format!(
                        "svm has {} weights for {} features",
                        svm.w.len(),
                        tfidf.dim()
                    )));
                }
                Ok(TrainedModel::Svm { tfidf, svm })
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}
