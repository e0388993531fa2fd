//! Click-guided interactive segmentation.
//!
//! Foreground and background clicks are rendered as disks into two guidance
//! channels stacked with the image for an interactive U-Net. Training uses a
//! dice loss weighted per pixel by a gaussian boundary emphasis fused with
//! the foreground click regions, and click disks can scale with the size of
//! the region being segmented.

pub mod data;
pub mod error;
pub mod exec;
pub mod guidance;
pub mod harness;
pub mod loss;
pub mod network;
pub mod nn;
pub mod raster;
pub mod weighting;

pub use error::{Error, Result};
pub use exec::Execution;
