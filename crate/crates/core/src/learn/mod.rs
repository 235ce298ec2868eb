//! MLP policies, reverse-mode autodiff and symmetry-regularized behavior
//! cloning.

mod checkpoint;
mod policy;
pub mod tape;
mod train;

pub use checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use policy::{bc_loss, chunk_quaternion_columns, featurize, Policy};
pub use tape::{Gradients, Tape, Var};
pub use train::{
    dataset_rows, grad_check, gradients, metrics_csv, sym_loss, total_loss, train, train_rows, Batch,
    EpochMetrics, SymContext, TrainConfig, TrainMode, TrainOutcome, GRAD_CHECK_FLOOR, GRAD_CHECK_STEP,
};

#[cfg(test)]
mod tests;
