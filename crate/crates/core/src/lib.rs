//! Dual-encoder detector for machine-generated text and source code.
//!
//! Two frozen transformer encoders produce pooled vectors that a small gated
//! fusion head combines into a single logit. Around that core sit the pieces
//! needed to run it end to end: tokenizers, a checkpoint format, chunked
//! long-document inference, temperature calibration, corpus construction and
//! an evaluation/benchmark harness.
//!
//! Label convention everywhere: `0` is human-written, `1` is machine-generated.

pub mod bench;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fusion;
pub mod metrics;
pub mod pipeline;
pub mod synthetic;
pub mod tensor;
pub mod tokenizers;
pub mod weights;

pub use error::{Error, Result};
pub use tensor::Tensor;
