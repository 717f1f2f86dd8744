//! Training of the flow controls: supervised and shared-prior objectives,
//! the optimizer, data pipeline and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod control;
pub mod data;
pub mod loss;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{term_descriptor, term_from_descriptor, Checkpoint, NamedTensor};
pub use control::{Branch, ControlParams};
pub use data::{image_files, load_dir, observation_alignment, preimage_shape, random_crop, Augmentation};
pub use loss::{cost_j, loss_sup, LossKind};
pub use train::{
    control_from_checkpoint, control_tensors, MetricRow, Objective, Problem, SharedConfig, Supervised,
    TrainConfig, Trainer, Unsupervised, ValidationSet, METRICS_HEADER, PLAN_MARGINAL_TOL,
};
