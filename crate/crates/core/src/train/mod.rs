//! Loss, optimizer, metrics and the training loop.

mod adam;
mod loss;
mod metrics;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use loss::{loss, LossKind, LossTerms};
pub use metrics::{evaluate, MetricAccumulator, MetricReport, DEFAULT_TOLERANCES};
pub use trainer::{
    center_baseline, evaluate_sessions, predict_session, train, train_from, window_gradient,
    write_history, EpochRecord, TrainConfig, TrainOutcome, HISTORY_HEADER,
};
