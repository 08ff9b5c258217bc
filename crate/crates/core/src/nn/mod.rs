//! The recurrent blockage predictor: dense-ReLU input layer, one LSTM layer,
//! dense-ReLU output layer and a single sigmoid unit.

pub mod checkpoint;
pub mod loss;
mod network;
mod params;

pub use checkpoint::{Checkpoint, Lineage, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{weighted_bce, weighted_bce_logit_grad, PROB_EPS};
pub use network::{
    chunked_gradients, forward_sequence, forward_step, sequence_loss, tbptt_gradients, RecurrentState, SequenceRef,
    Tbptt, TbpttOutput,
};
pub use params::{init_params, Gradients, Layout, ModelDims, ModelParams, Real, Segment, Width};
