//! The anatomical and pathological segmentation networks: assembly,
//! training, per-slice inference and the masking/merge of their outputs.

pub mod merge;
pub mod model;
pub mod train;
pub mod unet;

#[cfg(test)]
mod tests;

pub use merge::refine_and_merge;
pub use model::{argmax_channels, ClassMap, SegModel, SegRole};
pub use train::{monitor_loss, train, EpochRecord, History, TrainCase, TrainConfig};
pub use unet::{ForwardOutput, UNet, UNetSpec};
