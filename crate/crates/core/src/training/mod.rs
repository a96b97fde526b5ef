//! Splitting, minibatching, optimisation, early stopping and hyperparameter search.

mod data;
mod optim;
mod search;
mod splits;
mod trainer;

pub use data::{domain_loss, make_batch, predict, DomainData, Predictions, Sample, EVAL_CHUNK};
pub use optim::{adam_step, clip_global_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use search::{draw_configs, select_best, SearchSpace};
pub use splits::{make_splits, split_domain, DomainSplit, SplitPlan, N_FOLDS, TEST_FRACTION};
pub use trainer::{train, validation_loss, DomainWeighting, EarlyStopping, EpochRecord, TrainConfig, TrainResult};
