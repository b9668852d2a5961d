//! Minimal deterministic tensor engine with reverse-mode differentiation,
//! covering the layer set of the segmentation networks.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod kernels;
pub mod layers;
pub mod loss;
pub mod real;
pub mod tape;
pub mod tensor;


pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use init::he_init;
pub use layers::{BatchNorm, Conv2d, Dense, Forward, Mode, ParamId, ParamStore, RunningStats, SqueezeExcite, UpConv2};
pub use loss::{loss_registry, LossConfig, SegmentationLoss};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
