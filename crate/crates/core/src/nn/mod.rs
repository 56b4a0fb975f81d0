//! Differentiable building blocks: convolutions, the ConvLSTM cell, a
//! reverse-mode tape, RMSProp and weight clipping.

pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod lstm;
pub mod optim;
pub mod tensor;

pub use conv::{conv1d, conv1d_out_len, conv1d_transpose, conv1d_transpose_out_len, ConvSpec};
pub use graph::{Gradients, Graph, NodeId};
pub use lstm::{cell_step, convlstm_cell, CellNodes, ConvLstmState, ConvLstmWeights, InputConv, StateNodes};
pub use optim::{clip_weights, rmsprop_step, RmsProp, RmsPropConfig};
pub use tensor::Tensor;
