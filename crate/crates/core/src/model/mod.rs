//! The detector-corrector network.
//!
//! Token and position embeddings feed two task-specific transformer
//! encoders. A stack of interaction layers then lets each stream attend to
//! the other, mixes the attended update into the stream through a learned
//! sigmoid gate, and merges both streams with a shared feed-forward block.
//! A binary detection head and a vocabulary-sized correction head read the
//! final states. `C-only` and `two-head` variants drop the interaction part;
//! `D2C` pins the detection gate to zero.

mod batch;
mod config;
mod network;
mod params;
mod tiny;

pub use batch::{Batch, LabeledBatch};
pub use config::{Mode, ModelConfig};
pub use network::{
    decode, mix_losses, Bound, ForwardNodes, ForwardTrace, LossNodes, LossValues, Model, Side,
};
pub use params::{param_census, ModelParams, ParamSpec};
pub use tiny::{check_tiny, tiny_batch, tiny_config, TINY_LEN, TINY_VOCAB};
