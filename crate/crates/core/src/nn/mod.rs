//! Recurrent decoder: input stacking, augmentation, GRU model, CTC training.

pub mod checkpoint;
pub mod ctc;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod optim;
pub mod schedule;
pub mod speckle;
pub mod stack;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use ctc::{ctc_loss_and_grad, fastemit_augment, min_frames, CtcOutput};
pub use gradcheck::grad_check;
pub use loss::{loss_and_grad, loss_only, marginalize_rows, phoneme_posteriors, DiphoneLoss, LossSpec};
pub use model::{backward, forward, log_softmax, Mode, ModelConfig, ModelParams};
pub use optim::{clip_global_norm, optimizer_step, OptimizerSpec, OptimizerState};
pub use schedule::{lr_at, Schedule};
pub use speckle::speckle_mask;
pub use stack::{stack_inputs, stacked_len};
pub use train::{train, TrainConfig, TrainLog, TrainLogRow, TrainedModel};
