//! Cutmix: paste a rectangle from a partner image and mix the labels by the
//! area that survives.
//!
//! One mixing ratio and one box are drawn per batch and shared by every
//! sample; partners come from a random permutation of the batch. The label
//! weight is recomputed from the clipped box, so it always equals the share
//! of pixels that still come from the original image.

use rayon::prelude::*;

use crate::dataset::SoftLabel;
use crate::error::{Error, Result};
use crate::imagecore::ImageTensor;
use crate::rng::Rng;

/// Half-open pixel box `[x0, x1) x [y0, y1)`, clipped to the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CutBox {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Cutmix switch for training.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CutmixConfig {
    pub enabled: bool,
    pub alpha: f64,
    /// Also mix batches while the backbone is frozen.
    pub in_frozen_phase: bool,
}

impl Default for CutmixConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            alpha: 1.0,
            in_frozen_phase: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixedSample {
    pub image: ImageTensor,
    pub label: SoftLabel,
    pub lambda_adj: f64,
    pub partner: usize,
}

/// Beta(alpha, alpha) draw as `g1 / (g1 + g2)` of two Gamma(alpha) draws,
/// strictly inside `(0, 1)`.
pub fn sample_lambda(alpha: f64, rng: &mut Rng) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::arg(format!("cutmix alpha must be positive, got {alpha}")));
    }
    loop {
        let g1 = rng.gamma(alpha);
        let g2 = rng.gamma(alpha);
        let lambda = g1 / (g1 + g2);
        if lambda > 0.0 && lambda < 1.0 {
            return Ok(lambda);
        }
    }
}

/// Box with side lengths `floor(W * sqrt(1 - lambda))` by `floor(H * sqrt(1 - lambda))`,
/// centered at a uniformly drawn pixel and clipped to the image.
pub fn sample_box(width: usize, height: usize, lambda: f64, rng: &mut Rng) -> CutBox {
    let cx = rng.below(width);
    let cy = rng.below(height);
    box_at(width, height, lambda, cx, cy)
}

pub fn box_at(width: usize, height: usize, lambda: f64, cx: usize, cy: usize) -> CutBox {
    let ratio = (1.0 - lambda).clamp(0.0, 1.0).sqrt();
    let half_w = (width as f64 * ratio).floor() as usize / 2;
    let half_h = (height as f64 * ratio).floor() as usize / 2;
    CutBox {
        x0: cx.saturating_sub(half_w).min(width),
        x1: (cx + half_w).min(width),
        y0: cy.saturating_sub(half_h).min(height),
        y1: (cy + half_h).min(height),
    }
}

/// Pixels inside `cut` come from `b`, the rest from `a`. Returns the image and
/// `1 - area(cut) / (W * H)`.
pub fn cutmix_pair(a: &ImageTensor, b: &ImageTensor, cut: &CutBox) -> Result<(ImageTensor, f64)> {
    if !a.same_shape(b) {
        return Err(Error::dims(
            format!("{}x{}x{}", a.height(), a.width(), a.channels()),
            format!("{}x{}x{}", b.height(), b.width(), b.channels()),
        ));
    }
    if cut.x0 > cut.x1 || cut.y0 > cut.y1 || cut.x1 > a.width() || cut.y1 > a.height() {
        return Err(Error::arg(format!("cut box {cut:?} outside image")));
    }
    let c = a.channels();
    let mut data = a.data().to_vec();
    for y in cut.y0..cut.y1 {
        let start = a.index(y, cut.x0, 0);
        let end = start + (cut.x1 - cut.x0) * c;
        data[start..end].copy_from_slice(&b.data()[start..end]);
    }
    let lambda_adj = 1.0 - cut.area() as f64 / (a.width() * a.height()) as f64;
    Ok((ImageTensor::new(a.height(), a.width(), c, data)?, lambda_adj))
}

/// `lambda * ya + (1 - lambda) * yb`.
pub fn mix_labels(ya: &SoftLabel, yb: &SoftLabel, lambda: f64) -> Result<SoftLabel> {
    if ya.len() != yb.len() {
        return Err(Error::dims(ya.len(), yb.len()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg(format!("mixing ratio {lambda} outside [0, 1]")));
    }
    let probs = ya
        .probs()
        .iter()
        .zip(yb.probs())
        .map(|(&p, &q)| lambda * p + (1.0 - lambda) * q)
        .collect();
    Ok(SoftLabel::from_raw(probs))
}

/// Mix every sample with a permuted partner using one shared ratio and box.
pub fn cutmix_batch(
    images: &[ImageTensor],
    labels: &[SoftLabel],
    alpha: f64,
    rng: &mut Rng,
) -> Result<Vec<MixedSample>> {
    if images.len() != labels.len() {
        return Err(Error::dims(images.len(), labels.len()));
    }
    if images.len() < 2 {
        return Err(Error::arg("cutmix needs a batch of at least 2 samples"));
    }
    if let Some(bad) = images.iter().find(|img| !img.same_shape(&images[0])) {
        return Err(Error::dims(
            format!("{}x{}", images[0].height(), images[0].width()),
            format!("{}x{}", bad.height(), bad.width()),
        ));
    }
    let mut partners: Vec<usize> = (0..images.len()).collect();
    rng.shuffle(&mut partners);
    let lambda = sample_lambda(alpha, rng)?;
    let cut = sample_box(images[0].width(), images[0].height(), lambda, rng);

    partners
        .par_iter()
        .enumerate()
        .map(|(i, &j)| {
            let (image, lambda_adj) = cutmix_pair(&images[i], &images[j], &cut)?;
            let label = mix_labels(&labels[i], &labels[j], lambda_adj)?;
            Ok(MixedSample {
                image,
                label,
                lambda_adj,
                partner: j,
            })
        })
        .collect()
}
