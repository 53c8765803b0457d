//! Random training-time augmentation: flip, rotation, zoom, shear ("warping")
//! and brightness/contrast ("lighting").

use serde::{Deserialize, Serialize};

use crate::imagecore::{adjust_lighting, affine_transform, ImageTensor};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub hflip: bool,
    pub rotation: f64,
    pub zoom: f64,
    pub shear: f64,
    pub brightness: f64,
    pub contrast: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        hflip: false,
        rotation: 0.0,
        zoom: 1.0,
        shear: 0.0,
        brightness: 0.0,
        contrast: 1.0,
    };
}

/// Closed sampling ranges for [`sample_augmentation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub max_rotation: f64,
    pub max_zoom: f64,
    pub max_shear: f64,
    pub max_brightness: f64,
    pub max_contrast_delta: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            max_rotation: 10.0,
            max_zoom: 1.1,
            max_shear: 0.05,
            max_brightness: 0.1,
            max_contrast_delta: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn contains(&self, p: &AugmentParams) -> bool {
        p.rotation.abs() <= self.max_rotation
            && (1.0..=self.max_zoom).contains(&p.zoom)
            && p.shear.abs() <= self.max_shear
            && p.brightness.abs() <= self.max_brightness
            && (p.contrast - 1.0).abs() <= self.max_contrast_delta
    }
}

pub fn sample_augmentation(rng: &mut Rng, cfg: &AugmentConfig) -> AugmentParams {
    AugmentParams {
        hflip: rng.coin(cfg.flip_prob),
        rotation: rng.uniform(-cfg.max_rotation, cfg.max_rotation),
        zoom: rng.uniform(1.0, cfg.max_zoom),
        shear: rng.uniform(-cfg.max_shear, cfg.max_shear),
        brightness: rng.uniform(-cfg.max_brightness, cfg.max_brightness),
        contrast: rng.uniform(1.0 - cfg.max_contrast_delta, 1.0 + cfg.max_contrast_delta),
    }
}

/// Flip, then affine warp, then lighting; in that order.
pub fn apply_augmentation(img: &ImageTensor, p: &AugmentParams) -> ImageTensor {
    let flipped;
    let base = if p.hflip {
        flipped = img.hflip();
        &flipped
    } else {
        img
    };
    let warped = affine_transform(base, p.rotation, p.zoom, p.shear);
    adjust_lighting(&warped, p.brightness, p.contrast)
}
