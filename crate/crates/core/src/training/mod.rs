//! Early-stopped training, stratified cross-validation and metrics.

mod artifact;
mod cv;
mod folds;
mod metrics;
mod trainer;

pub use artifact::ModelArtifact;
pub use cv::{
    check_inputs, predict_indexed, prepare_fold, run_cv, train_one, Aggregate, CvReport, CvTiming, FoldResult,
    ModelKind, PreparedFold, Resources, TrainConfig, TrainOutcome, TrainedModel,
};
pub use folds::{kfold_split, Fold, FoldPlan};
pub use metrics::{evaluate, ClassMetrics, ConfusionMatrix, MeanStd, Metrics};
pub use trainer::{fit, EarlyStopping, EpochModel, EpochRecord, HanTrainer, History, StopDecision};
