//! Occlusion-robustness toolkit for image classifiers.
//!
//! The crate fabricates eight synthetic occlusion conditions, trains a small
//! convolutional classifier with or without Cutmix regularization, recovers
//! occluded pixels with classical inpainting, and reports top-1/top-5 error
//! across clean, occluded and recovered test sets.

pub mod cutmix;
pub mod dataset;
pub mod demo;
pub mod error;
pub mod evaluator;
pub mod imagecore;
pub mod inpaint;
pub mod occlusion;
pub mod rng;
pub mod trainer;

pub use dataset::{DatasetManifest, DatasetSplit, Sample, SoftLabel};
pub use error::{Error, Result};
pub use imagecore::ImageTensor;
pub use occlusion::{MaskBitmap, MaskGeometry, MaskKind};
pub use rng::Rng;
