//! Weather degradation synthesis, scene-balanced sampling plans, residual
//! channel recalibration with gradients, multi-frame probability fusion,
//! segmentation metrics, and uniform checkpoint averaging.

pub mod cli;
pub mod config;
pub mod degrade;
pub mod eval;
pub mod fuse;
pub mod metrics;
pub mod pixels;
pub mod recalib;
pub mod rng;
pub mod sampler;
pub mod soup;
