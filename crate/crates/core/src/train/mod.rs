//! End-to-end training of the gain network through the unrolled canceller.

mod backprop;
mod data;
mod gradcheck;
mod grads;
mod loss;
mod optim;
mod trainer;

pub use backprop::{backward, forward_traced, Trace};
pub use data::{sample_example, TrainConfig, TrainingExample};
pub use gradcheck::{compare_gradients, grad_check, numeric_gradient, relative_error, sample_loss, GradCheckReport, GradSample};
pub use grads::GradientSet;
pub use loss::{echo_loss, echo_loss_grad};
pub use optim::{clip_global_norm, lr_at_epoch, Optimizer, OptimizerKind};
pub use trainer::{train, Checkpoint, EpochRecord, TrainOptions, TrainOutcome};
