//! Minimal dense-tensor numeric core with tape-based reverse-mode
//! differentiation, the layers the networks here need (linear, ReLU, layer
//! normalization), and the Adam optimizer. Everything is 64-bit.

mod adam;
mod checkpoint;
mod mlp;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use mlp::{forward, Mlp, ParamId, ParamSet};
pub use tape::{ArcIndex, Gradients, Tape, ValueId};
pub use tensor::Tensor;
