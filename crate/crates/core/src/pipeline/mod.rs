//! Document scoring: tokenize, chunk, encode, fuse, aggregate, calibrate,
//! threshold.

mod aggregate;
mod calibrate;
mod chunk;
mod detect;

pub use aggregate::{aggregate, Aggregation};
pub use calibrate::{fit_temperature, nll, Calibration};
pub use chunk::{chunk, ChunkConfig, ChunkPlan};
pub use detect::{Detection, Detector, HeadSettings};
