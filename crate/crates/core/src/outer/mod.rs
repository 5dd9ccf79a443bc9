//! Outer alignment stage.
//!
//! A task encoder on `[v; t]` is trained to match the frozen inner prediction
//! `ŷ = (y^v + y^t) / 2` under a cross-entropy alignment term, minus the
//! entropy of its mean prediction. Its argmax gives the final clusters.

mod encoder;
mod loss;
mod train;

pub use encoder::{encoder_forward, final_assignments, hard_assignments, Dense, TaskEncoder};
pub use loss::{loss_align, loss_outer, outer_loss_with_grad, AlignOrder, OuterLossParts};
pub use train::{outer_loss_and_grad, train_outer, train_outer_from, OuterEpochRecord, OuterTrainConfig, OuterTrainOutput};
