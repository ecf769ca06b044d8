//! Dense tensors with a reverse-mode tape, covering the layers of the policy network.

mod check;
mod checkpoint;
mod params;
mod tape;
mod tensor;

pub use check::{grad_check, GradCheckConfig, GradCheckEntry, GradCheckReport, Probe};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, sidecar_path, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use params::{AdamConfig, Gradients, ParamId, ParamStore};
pub use tape::{Backward, BatchNormIds, NodeId, NormMode, Tape, BN_EPSILON, BN_MOMENTUM};
pub use tensor::{masked_softmax, Tensor};

#[cfg(test)]
mod tests;
