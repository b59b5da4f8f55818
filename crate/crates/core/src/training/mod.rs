//! Losses, Adam with staircase decay, evaluation metrics, the training loop,
//! k-fold cross-validation and the evolving-versus-frozen ablation.

mod ablation;
mod config;
mod cv;
mod loss;
mod metrics;
mod optim;
mod snapshot;
mod trainer;

pub use ablation::{ablate, evolving_config, frozen_config, AblationRow, ArmSummary};
pub use config::{default_architecture, learning_rate, TaskType, TrainConfig};
pub use cv::{
    cross_validate, cross_validate_with, evaluate_model, fold_assignments, CvSummary, FoldOutcome, MeanPredictor,
    MeanStd, Predictor,
};
pub use loss::{loss_value, masked_logistic_loss, task_loss, weighted_l2_loss};
pub use metrics::{auc, auc_brute_force, rmse, roc_auc, TaskMetrics};
pub use optim::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use snapshot::{snapshot_similarity, SimilaritySnapshot, SnapshotRecorder};
pub use trainer::{
    split_validation, train, train_from, train_observed, CurveRecord, EpochObserver, Evaluation, TrainReport,
    TrainedModel,
};
