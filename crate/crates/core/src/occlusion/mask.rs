use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::ImageTensor;
use crate::rng::Rng;

/// Which half of the image a one-sided mask covers (image left/right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskKind {
    pub id: u8,
    pub side: Side,
}

impl MaskKind {
    pub const COUNT: u8 = 8;

    pub fn new(id: u8, side: Side) -> Result<Self> {
        check_id(id)?;
        let sided = Self::is_sided(id);
        if sided == (side == Side::None) {
            return Err(Error::arg(format!(
                "mask kind {id} {} a side",
                if sided { "requires" } else { "does not take" }
            )));
        }
        Ok(Self { id, side })
    }

    /// Kinds 1 (one eye) and 5 (half face) pick a side per image.
    pub fn is_sided(id: u8) -> bool {
        id == 1 || id == 5
    }

    pub fn name(id: u8) -> &'static str {
        match id {
            1 => "one eye",
            2 => "nose",
            3 => "surgical mask",
            4 => "eyes and hair",
            5 => "half face",
            6 => "watermark stripes",
            7 => "background",
            8 => "whole face",
            _ => "unknown",
        }
    }
}

fn check_id(id: u8) -> Result<()> {
    if (1..=MaskKind::COUNT).contains(&id) {
        Ok(())
    } else {
        Err(Error::arg(format!("unknown mask kind {id}, expected 1..=8")))
    }
}

/// Half-open rectangle `[x0, x1) x [y0, y1)` in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    fn valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.x0)
            && unit(self.x1)
            && unit(self.y0)
            && unit(self.y1)
            && self.x0 <= self.x1
            && self.y0 <= self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.rx;
        let dy = (y - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }
}

/// Shape parameters of the eight mask families, in unit-square coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskGeometry {
    /// Image-left eye; the right eye is its mirror image.
    pub eye: Rect,
    pub nose: Rect,
    pub lower_face: Rect,
    pub top_band: Rect,
    /// Vertical split line of the half-face mask.
    pub half_split: f64,
    pub stripe_period: f64,
    pub stripe_duty: f64,
    pub face: Ellipse,
    pub fill: f32,
}

impl Default for MaskGeometry {
    fn default() -> Self {
        Self {
            eye: Rect {
                x0: 0.18,
                x1: 0.46,
                y0: 0.33,
                y1: 0.50,
            },
            nose: Rect {
                x0: 0.38,
                x1: 0.62,
                y0: 0.45,
                y1: 0.66,
            },
            lower_face: Rect {
                x0: 0.15,
                x1: 0.85,
                y0: 0.55,
                y1: 0.95,
            },
            top_band: Rect {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 0.52,
            },
            half_split: 0.5,
            stripe_period: 0.18,
            stripe_duty: 1.0 / 3.0,
            face: Ellipse {
                cx: 0.50,
                cy: 0.52,
                rx: 0.40,
                ry: 0.48,
            },
            fill: 0.5,
        }
    }
}

impl MaskGeometry {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = [self.eye, self.nose, self.lower_face, self.top_band]
            .iter()
            .all(Rect::valid)
            && unit(self.half_split)
            && self.stripe_period > 0.0
            && self.stripe_period <= 1.0
            && unit(self.stripe_duty)
            && unit(self.face.cx)
            && unit(self.face.cy)
            && self.face.rx > 0.0
            && self.face.ry > 0.0
            && (0.0..=1.0).contains(&self.fill);
        if ok {
            Ok(())
        } else {
            Err(Error::arg(
                "mask geometry outside the unit square or fill outside [0, 1]",
            ))
        }
    }
}

/// Binary occlusion raster, row-major; `true` marks an occluded pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskBitmap {
    pub kind: MaskKind,
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl MaskBitmap {
    pub fn new(kind: MaskKind, height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::dims(height * width, bits.len()));
        }
        Ok(Self {
            kind,
            height,
            width,
            bits,
        })
    }

    /// A mask with every pixel set to `value`, tagged as an ad-hoc kind-2 mask.
    pub fn uniform(height: usize, width: usize, value: bool) -> Self {
        Self {
            kind: MaskKind {
                id: 2,
                side: Side::None,
            },
            height,
            width,
            bits: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn hflip(&self) -> MaskBitmap {
        let mut bits = Vec::with_capacity(self.bits.len());
        for row in self.bits.chunks_exact(self.width) {
            bits.extend(row.iter().rev());
        }
        MaskBitmap { bits, ..self.clone() }
    }

    /// Greyscale rendering: 0 visible, 1 occluded.
    pub fn to_image(&self) -> ImageTensor {
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ImageTensor::from_raw(self.height, self.width, 1, data)
    }

    /// Inverse of [`MaskBitmap::to_image`]; pixels at or above one half count as occluded.
    pub fn from_image(kind: MaskKind, img: &ImageTensor) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::arg("mask image must be single-channel"));
        }
        let bits = img.data().iter().map(|&v| v >= 0.5).collect();
        Self::new(kind, img.height(), img.width(), bits)
    }
}

/// Rasterize mask family `id`, drawing the side of one-sided families from `rng`.
pub fn generate_mask(
    id: u8,
    height: usize,
    width: usize,
    rng: &mut Rng,
    geometry: &MaskGeometry,
) -> Result<MaskBitmap> {
    check_id(id)?;
    let side = if MaskKind::is_sided(id) {
        if rng.coin(0.5) {
            Side::Left
        } else {
            Side::Right
        }
    } else {
        Side::None
    };
    rasterize(MaskKind::new(id, side)?, height, width, geometry)
}

/// Deterministic rasterization of a fully specified kind.
pub fn rasterize(kind: MaskKind, height: usize, width: usize, geometry: &MaskGeometry) -> Result<MaskBitmap> {
    if height == 0 || width == 0 {
        return Err(Error::arg("mask dimensions must be positive"));
    }
    geometry.validate()?;
    if kind.side == Side::Right {
        let left = rasterize(
            MaskKind {
                side: Side::Left,
                ..kind
            },
            height,
            width,
            geometry,
        )?;
        return Ok(MaskBitmap { kind, ..left.hflip() });
    }
    let g = geometry;
    let inside = |x: f64, y: f64| -> bool {
        match kind.id {
            1 => g.eye.contains(x, y),
            2 => g.nose.contains(x, y),
            3 => g.lower_face.contains(x, y),
            4 => g.top_band.contains(x, y),
            5 => x < g.half_split,
            6 => ((x + y) / g.stripe_period).fract() < g.stripe_duty,
            7 => !g.face.contains(x, y),
            _ => g.face.contains(x, y),
        }
    };
    let mut bits = Vec::with_capacity(height * width);
    for row in 0..height {
        let y = (row as f64 + 0.5) / height as f64;
        for col in 0..width {
            let x = (col as f64 + 0.5) / width as f64;
            bits.push(inside(x, y));
        }
    }
    MaskBitmap::new(kind, height, width, bits)
}

/// Occluded pixels take `fill` in every channel; the rest are copied bit-exactly.
pub fn apply_mask(img: &ImageTensor, mask: &MaskBitmap, fill: f32) -> Result<ImageTensor> {
    if img.height() != mask.height || img.width() != mask.width {
        return Err(Error::dims(
            format!("{}x{}", img.height(), img.width()),
            format!("{}x{}", mask.height, mask.width),
        ));
    }
    if !(0.0..=1.0).contains(&fill) {
        return Err(Error::arg(format!("fill {fill} outside [0, 1]")));
    }
    let c = img.channels();
    let mut data = img.data().to_vec();
    for (px, &occluded) in data.chunks_exact_mut(c).zip(&mask.bits) {
        if occluded {
            px.fill(fill);
        }
    }
    ImageTensor::new(img.height(), img.width(), c, data)
}

pub fn mask_area_fraction(mask: &MaskBitmap) -> f64 {
    mask.count() as f64 / mask.bits.len() as f64
}
