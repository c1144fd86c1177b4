//! Optimizers, the training loop, checkpoints and gradient checking.

mod checkpoint;
mod config;
mod gradcheck;
mod model;
mod optimizer;
pub(crate) mod trainer;

pub use checkpoint::{Checkpoint, Record, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelKind, TrainConfig};
pub use gradcheck::{gradcheck, gradcheck_instance, gradcheck_model, relative_error, GradcheckReport, TensorCheck};
pub use model::{task_loss, Model, ModelGrads};
pub use optimizer::{optimizer_step, OptimizerKind, OptimizerState, Slot};
pub use trainer::{
    train, write_manifest, Datasets, MetricRecord, RunMetrics, TrainState, Trainer, CHECKPOINT_FILE, LAST_GOOD_FILE,
    MANIFEST_FILE, METRICS_FILE, METRICS_HEADER,
};
