//! Losses, optimizer, data pipeline, metrics and the training loop.

pub mod adam;
pub mod data;
pub mod loss;
pub mod metrics;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use data::{augment8, build_training_set, extract_patches, Dihedral, Pair};
pub use loss::{loss_fast, loss_reference, loss_with_grad, record_loss, LossConfig, LossKind};
pub use metrics::{metrics, sam_degrees, MetricsReport};
pub mod trainer;
pub use trainer::{history_csv, train, train_from, Dataset, EvalRecord, HistoryRow, TrainConfig, TrainError, TrainOutcome};
