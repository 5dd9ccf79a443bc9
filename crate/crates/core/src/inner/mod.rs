//! Dual-branch BatchEnsemble integrator.
//!
//! Each modality has its own BatchEnsemble head producing soft cluster
//! assignments (mean of member softmaxes). The branches are trained jointly on
//! cross-modal neighbor distillation, a confidence term and a balance term:
//! `L_inner = L_dist + L_conf - L_bal`.

mod layer;
mod loss;
mod train;

pub use layer::{BatchEnsembleLayer, LayerGrads};
pub use loss::{inner_average, inner_loss_with_grad, loss_bal, loss_conf, loss_dist, ConfidenceForm, InnerLossParts};
pub use train::{
    evaluate_inner, inner_loss_and_grad, loss_and_grad_with_targets, neighbor_assign, train_inner, train_inner_with_indices, InnerEpochRecord,
    InnerGrads, InnerModel, InnerStepInput, InnerTrainConfig, InnerTrainOutput, InnerTrainer, ModulatorMode,
    NeighborResampling,
};
pub(crate) use train::{derive_seed, plateaued};
