//! Dense variational network engine.

mod adam;
mod layer;
mod network;

pub use adam::{adam_step, AdamState, LearningRates, ParamGroup, ParamTensor};
pub use layer::VariationalDenseLayer;
pub use network::{
    draw_noise, l2_loss_and_grads, loss_and_grads, Activation, Batch, LayerGrads, Loss, Network,
    NetworkGrads,
};
