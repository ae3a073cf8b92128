//! Loss, optimiser, schedule, checkpoints and the training loop.

mod checkpoint;
mod config;
mod loss;
mod optim;
mod trainer;

pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use config::TrainConfig;
pub use loss::{charbonnier_loss, CHARBONNIER_EPS};
pub use optim::{adamax_step, cosine_lr, AdaMax};
pub use trainer::{
    flip_h, flip_v, infer, load_model, make_sample, predict, rot90, sample_gradients, train_loop, Sample, StepLog,
    TrainSummary, Trainer,
};
