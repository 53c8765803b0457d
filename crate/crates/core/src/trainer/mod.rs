//! Small convolutional classifier trained from scratch: layer kernels with
//! hand-written backward passes, soft-target cross-entropy, SGD with
//! momentum under a one-cycle schedule, a learning-rate range sweep,
//! frozen/unfrozen phases and binary checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod lr_find;
pub mod model;
pub mod schedule;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use lr_find::{lr_find, lr_find_model, LrFindConfig, LrFindResult, LrPoint, Objective};
pub use model::{
    compute_gradients, forward, init_model, soft_cross_entropy, ArchDescriptor, Frozen, Group, LayerSpec,
    ModelParams,
};
pub use schedule::{one_cycle, one_cycle_at, sgd_momentum_step, OptimizerState, ScheduleConfig};
pub use train::{
    top1_error, train, train_sources, EpochRecord, Phase, StepRecord, TrainConfig, TrainHistory,
};
