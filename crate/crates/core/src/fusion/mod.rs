//! Gated fusion head, class-balanced BCE and head training.
//!
//! ```text
//! g     = σ(W_g·[h_A; h_B] + b_g)
//! fused = g ⊙ (W_A·h_A + b_A) + (1 − g) ⊙ (W_B·h_B + b_B)
//! z     = w·fused + b
//! ```
//!
//! Parameters are stored as f32 tensors; activations, losses and gradients
//! are computed in f64.

mod head;
mod loss;
mod probe;
mod train;

pub use head::{FusionHead, FusionOutput};
pub use loss::{cb_bce, sigmoid, softplus, ClassWeights};
pub use probe::LinearProbe;
pub use train::{
    doc_logits, probe_report,
    fit, linear_probe_fit, train_head, EpochLog, Head, LabeledDoc, Optimizer, ProbeReport,
    TrainConfig, TrainLog,
};
