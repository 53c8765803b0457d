//! Geometric and photometric transforms. All of them preserve image size
//! (except resizing, obviously) and keep intensities inside `[0, 1]`.

use crate::error::{Error, Result};
use crate::imagecore::ImageTensor;

/// Bilinear resize with half-pixel-centered sampling.
pub fn resize_bilinear(img: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::arg(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    if out_h == img.height() && out_w == img.width() {
        return Ok(img.clone());
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let mut out = Vec::with_capacity(out_h * out_w * ch);
    for y in 0..out_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        for x in 0..out_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            for c in 0..ch {
                out.push(bilinear(img, fy, fx, c));
            }
        }
    }
    Ok(ImageTensor::from_raw(out_h, out_w, ch, out))
}

/// Rotation (degrees), isotropic zoom and horizontal shear about the image
/// center, resampled bilinearly with reflection padding outside the frame.
pub fn affine_transform(img: &ImageTensor, rotation: f64, zoom: f64, shear: f64) -> ImageTensor {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let (sin, cos) = rotation.to_radians().sin_cos();
    let inv_zoom = 1.0 / zoom;
    let (half_w, half_h) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut out = Vec::with_capacity(h * w * ch);
    for y in 0..h {
        let py = y as f64 + 0.5 - half_h;
        for x in 0..w {
            let px = x as f64 + 0.5 - half_w;
            // Inverse of rotate . shear . zoom, applied to the output position.
            let rx = cos * px + sin * py;
            let ry = -sin * px + cos * py;
            let qx = (rx - shear * ry) * inv_zoom;
            let qy = ry * inv_zoom;
            let sx = reflect(qx + half_w - 0.5, w);
            let sy = reflect(qy + half_h - 0.5, h);
            for c in 0..ch {
                out.push(bilinear(img, sy, sx, c));
            }
        }
    }
    ImageTensor::from_raw(h, w, ch, out)
}

/// `v' = clamp(contrast * (v - 0.5) + 0.5 + brightness, 0, 1)`.
pub fn adjust_lighting(img: &ImageTensor, brightness: f64, contrast: f64) -> ImageTensor {
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let out = contrast * (v as f64 - 0.5) + 0.5 + brightness;
            out.clamp(0.0, 1.0) as f32
        })
        .collect();
    ImageTensor::from_raw(img.height(), img.width(), img.channels(), data)
}

/// Fold a sample coordinate into `[-0.5, n - 0.5]` by mirroring at the frame edges.
fn reflect(coord: f64, n: usize) -> f64 {
    let n = n as f64;
    if (-0.5..=n - 0.5).contains(&coord) {
        return coord;
    }
    let mut t = (coord + 0.5).rem_euclid(2.0 * n);
    if t > n {
        t = 2.0 * n - t;
    }
    t - 0.5
}

#[inline]
fn bilinear(img: &ImageTensor, fy: f64, fx: f64, c: usize) -> f32 {
    let (h, w) = (img.height(), img.width());
    let fy = fy.clamp(0.0, (h - 1) as f64);
    let fx = fx.clamp(0.0, (w - 1) as f64);
    let y0 = fy.floor() as usize;
    let x0 = fx.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let ty = fy - y0 as f64;
    let tx = fx - x0 as f64;
    let lerp = |a: f32, b: f32, t: f64| {
        if t == 0.0 {
            a as f64
        } else {
            a as f64 + t * (b as f64 - a as f64)
        }
    };
    let top = lerp(img.get(y0, x0, c), img.get(y0, x1, c), tx);
    let bottom = lerp(img.get(y1, x0, c), img.get(y1, x1, c), tx);
    let v = if ty == 0.0 { top } else { top + ty * (bottom - top) };
    v.clamp(0.0, 1.0) as f32
}
