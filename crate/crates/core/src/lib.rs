//! Perturbation-based explanations for object detectors.
//!
//! The engine removes, replaces, or re-backgrounds detected objects with
//! generative inpainting, re-runs the detector, and summarizes how its
//! output changes (flip rate, confidence drop). Model services sit behind
//! the traits in [`backends`]; a deterministic mock suite ships with the
//! crate so whole experiments run without model weights.

pub mod backends;
pub mod cli;
pub mod error;
pub mod manifest;
pub mod maskops;
pub mod metrics;
pub mod perturb;
pub mod prompts;
pub mod raster;
pub mod report;
pub mod runner;
pub mod synth;
pub mod types;

pub use error::{Error, ErrorCategory, Result};
pub use types::{BBox, BinaryMask, Detection, RasterImage, SoftMask};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
