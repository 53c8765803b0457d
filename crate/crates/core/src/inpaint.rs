//! Occlusion recovery with known masks: harmonic (Laplace) fill and a
//! left-right mirror copy, composable as strategies.
//!
//! Harmonic fill runs Gauss-Seidel sweeps in raster order over the masked
//! pixels of each channel. Unmasked 4-neighbours act as Dirichlet data.
//! Along the image border the missing neighbour is replaced by requiring a
//! zero second derivative across the border, so an edge pixel averages its
//! two neighbours along the edge. Masked image corners keep their starting
//! value. Sweeps start from the least-squares plane through the boundary
//! pixels, clamped per component to the boundary range; every update is a
//! convex combination, so filled values never leave that range.

use std::collections::VecDeque;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Sample};
use crate::error::{Error, Result};
use crate::imagecore::{write_image, ImageFormat, ImageTensor};
use crate::occlusion::{load_mask, read_mask_index, MaskBitmap, MANIFEST_FILE, MASK_INDEX_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryKind {
    Harmonic,
    MirrorThenHarmonic,
}

impl std::str::FromStr for RecoveryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(RecoveryKind::Harmonic),
            "mirror_then_harmonic" | "mirror-then-harmonic" => Ok(RecoveryKind::MirrorThenHarmonic),
            other => Err(Error::arg(format!(
                "unknown recovery strategy {other:?}, expected harmonic or mirror_then_harmonic"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStrategy {
    pub kind: RecoveryKind,
    pub tol: f64,
    pub max_iters: usize,
}

impl RecoveryStrategy {
    pub fn new(kind: RecoveryKind) -> Self {
        Self {
            kind,
            tol: 1e-5,
            max_iters: 10_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::arg(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::arg("max_iters must be at least 1"));
        }
        Ok(())
    }
}

fn check_dims(img: &ImageTensor, mask: &MaskBitmap) -> Result<()> {
    if img.height() != mask.height() || img.width() != mask.width() {
        return Err(Error::dims(
            format!("{}x{}", img.height(), img.width()),
            format!("{}x{}", mask.height(), mask.width()),
        ));
    }
    Ok(())
}

/// 4-connected components of the masked pixels; `usize::MAX` marks unmasked.
fn components(mask: &MaskBitmap) -> (Vec<usize>, usize) {
    let (h, w) = (mask.height(), mask.width());
    let bits = mask.bits();
    let mut label = vec![usize::MAX; h * w];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !bits[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = count;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (y, x) = (p / w, p % w);
            for q in neighbours(y, x, h, w).into_iter().flatten() {
                if bits[q] && label[q] == usize::MAX {
                    label[q] = count;
                    queue.push_back(q);
                }
            }
        }
        count += 1;
    }
    (label, count)
}

fn neighbours(y: usize, x: usize, h: usize, w: usize) -> [Option<usize>; 4] {
    [
        (y > 0).then(|| (y - 1) * w + x),
        (x > 0).then(|| y * w + x - 1),
        (x + 1 < w).then(|| y * w + x + 1),
        (y + 1 < h).then(|| (y + 1) * w + x),
    ]
}

/// How a masked pixel is updated.
#[derive(Debug, Clone, Copy)]
enum Stencil {
    /// Mean of the listed neighbours.
    Mean([usize; 4], usize),
    /// Keeps its starting value.
    Fixed,
}

fn stencil(y: usize, x: usize, h: usize, w: usize) -> Stencil {
    let x_edge = x == 0 || x + 1 == w;
    let y_edge = y == 0 || y + 1 == h;
    let idx = |yy: usize, xx: usize| yy * w + xx;
    let mut list = [0; 4];
    let mut n = 0;
    let mut push = |v: usize| {
        list[n] = v;
        n += 1;
    };
    match (x_edge, y_edge) {
        (false, false) => {
            for q in neighbours(y, x, h, w).into_iter().flatten() {
                push(q);
            }
        }
        (true, false) => {
            push(idx(y - 1, x));
            push(idx(y + 1, x));
        }
        (false, true) => {
            push(idx(y, x - 1));
            push(idx(y, x + 1));
        }
        (true, true) => {
            if h >= 2 && w >= 2 {
                return Stencil::Fixed;
            }
            for q in neighbours(y, x, h, w).into_iter().flatten() {
                push(q);
            }
        }
    }
    Stencil::Mean(list, n)
}

/// Fill every masked pixel with a discrete harmonic interpolant of the
/// unmasked pixels around it. Returns the image and the number of sweeps
/// of the slowest channel.
pub fn harmonic_inpaint(
    img: &ImageTensor,
    mask: &MaskBitmap,
    tol: f64,
    max_iters: usize,
) -> Result<(ImageTensor, usize)> {
    check_dims(img, mask)?;
    RecoveryStrategy {
        kind: RecoveryKind::Harmonic,
        tol,
        max_iters,
    }
    .validate()?;
    if mask.is_empty() {
        return Ok((img.clone(), 0));
    }
    if mask.count() == mask.bits().len() {
        return Err(Error::NoBoundary);
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let (label, n_comp) = components(mask);
    let bits = mask.bits();
    let masked: Vec<usize> = (0..h * w).filter(|&p| bits[p]).collect();
    let stencils: Vec<Stencil> = masked.iter().map(|&p| stencil(p / w, p % w, h, w)).collect();

    let results: Vec<(Vec<f64>, usize)> = (0..ch)
        .into_par_iter()
        .map(|c| {
            let mut u: Vec<f64> = (0..h * w).map(|p| img.data()[p * ch + c] as f64).collect();
            let (lo, hi) = boundary_ranges(&u, bits, &label, n_comp, h, w);
            if !trend_init(&mut u, bits, &label, &lo, &hi, h, w) {
                scanline_init(&mut u, bits, h, w);
            }
            let mut iters = 0;
            while iters < max_iters {
                iters += 1;
                let mut change = 0.0f64;
                for (&p, st) in masked.iter().zip(&stencils) {
                    let v = match *st {
                        Stencil::Mean(list, n) => list[..n].iter().map(|&q| u[q]).sum::<f64>() / n as f64,
                        Stencil::Fixed => continue,
                    };
                    change = change.max((v - u[p]).abs());
                    u[p] = v;
                }
                if change < tol {
                    break;
                }
            }
            (u, iters)
        })
        .collect();

    let mut data = img.data().to_vec();
    let mut iterations = 0;
    for (c, (u, it)) in results.into_iter().enumerate() {
        iterations = iterations.max(it);
        for &p in &masked {
            data[p * ch + c] = (u[p] as f32).clamp(0.0, 1.0);
        }
    }
    Ok((ImageTensor::new(h, w, ch, data)?, iterations))
}

/// Min and max of the unmasked pixels touching each component.
fn boundary_ranges(
    u: &[f64],
    bits: &[bool],
    label: &[usize],
    n: usize,
    h: usize,
    w: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in 0..h * w {
        if bits[p] {
            continue;
        }
        for q in neighbours(p / w, p % w, h, w).into_iter().flatten() {
            if bits[q] {
                let c = label[q];
                lo[c] = lo[c].min(u[p]);
                hi[c] = hi[c].max(u[p]);
            }
        }
    }
    (lo, hi)
}

/// Start every masked pixel on the least-squares plane through all
/// boundary pixels, clamped to its component's boundary range. Harmonic
/// fills of components touching the image border are not unique (a linear
/// function vanishing on the boundary can be added), and starting on the
/// global trend selects the solution that continues it. Returns `false`
/// when the boundary pixels are collinear and no plane is determined.
fn trend_init(
    u: &mut [f64],
    bits: &[bool],
    label: &[usize],
    lo: &[f64],
    hi: &[f64],
    h: usize,
    w: usize,
) -> bool {
    let mut pts = Vec::new();
    for p in 0..h * w {
        if !bits[p]
            && neighbours(p / w, p % w, h, w)
                .into_iter()
                .flatten()
                .any(|q| bits[q])
        {
            pts.push(((p % w) as f64, (p / w) as f64, u[p]));
        }
    }
    let n = pts.len() as f64;
    let (mx, my, mv) = pts.iter().fold((0.0, 0.0, 0.0), |a, p| {
        (a.0 + p.0 / n, a.1 + p.1 / n, a.2 + p.2 / n)
    });
    let (mut sxx, mut sxy, mut syy, mut sxv, mut syv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, v) in &pts {
        let (dx, dy, dv) = (x - mx, y - my, v - mv);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxv += dx * dv;
        syv += dy * dv;
    }
    let det = sxx * syy - sxy * sxy;
    if det <= 1e-9 * (sxx + syy).powi(2) {
        return false;
    }
    let gx = (syy * sxv - sxy * syv) / det;
    let gy = (sxx * syv - sxy * sxv) / det;
    for p in 0..h * w {
        if bits[p] {
            let c = label[p];
            let v = mv + gx * ((p % w) as f64 - mx) + gy * ((p / w) as f64 - my);
            u[p] = v.clamp(lo[c], hi[c]);
        }
    }
    true
}

/// Start each masked pixel at the mean of the first unmasked pixels met by
/// scanning left, right, up and down. These are boundary pixels of the same
/// component, so the start already respects the boundary range.
fn scanline_init(u: &mut [f64], bits: &[bool], h: usize, w: usize) {
    let mut sum = vec![0.0f64; h * w];
    let mut cnt = vec![0u32; h * w];
    let mut scan = |line: &mut dyn Iterator<Item = usize>| {
        let mut last: Option<f64> = None;
        for p in line {
            if bits[p] {
                if let Some(v) = last {
                    sum[p] += v;
                    cnt[p] += 1;
                }
            } else {
                last = Some(u[p]);
            }
        }
    };
    for y in 0..h {
        scan(&mut (0..w).map(|x| y * w + x));
        scan(&mut (0..w).rev().map(|x| y * w + x));
    }
    for x in 0..w {
        scan(&mut (0..h).map(|y| y * w + x));
        scan(&mut (0..h).rev().map(|y| y * w + x));
    }
    let initialized: Vec<bool> = (0..h * w).map(|p| !bits[p] || cnt[p] > 0).collect();
    for p in 0..h * w {
        if bits[p] && cnt[p] > 0 {
            u[p] = sum[p] / cnt[p] as f64;
        }
    }
    // Pixels no axis scan reaches copy a reached neighbour, in BFS order.
    let mut done = initialized;
    let mut queue: VecDeque<usize> = (0..h * w).filter(|&p| done[p]).collect();
    while let Some(p) = queue.pop_front() {
        for q in neighbours(p / w, p % w, h, w).into_iter().flatten() {
            if !done[q] {
                u[q] = u[p];
                done[q] = true;
                queue.push_back(q);
            }
        }
    }
}

/// Copy each masked pixel from its mirror across the vertical centre line
/// when that pixel is unmasked. The residual marks pixels still missing.
pub fn mirror_fill(img: &ImageTensor, mask: &MaskBitmap) -> Result<(ImageTensor, MaskBitmap)> {
    check_dims(img, mask)?;
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let mut data = img.data().to_vec();
    let mut residual = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) {
                continue;
            }
            let mx = w - 1 - x;
            if mask.get(y, mx) {
                residual[y * w + x] = true;
            } else {
                for c in 0..ch {
                    data[img.index(y, x, c)] = img.get(y, mx, c);
                }
            }
        }
    }
    Ok((
        ImageTensor::new(h, w, ch, data)?,
        MaskBitmap::new(mask.kind, h, w, residual)?,
    ))
}

/// Recover an occluded image; also returns the harmonic sweep count.
pub fn recover_with_iterations(
    img: &ImageTensor,
    mask: &MaskBitmap,
    strategy: &RecoveryStrategy,
) -> Result<(ImageTensor, usize)> {
    strategy.validate()?;
    check_dims(img, mask)?;
    match strategy.kind {
        RecoveryKind::Harmonic => harmonic_inpaint(img, mask, strategy.tol, strategy.max_iters),
        RecoveryKind::MirrorThenHarmonic => {
            let (mirrored, residual) = mirror_fill(img, mask)?;
            harmonic_inpaint(&mirrored, &residual, strategy.tol, strategy.max_iters)
        }
    }
}

pub fn recover(img: &ImageTensor, mask: &MaskBitmap, strategy: &RecoveryStrategy) -> Result<ImageTensor> {
    recover_with_iterations(img, mask, strategy).map(|(img, _)| img)
}

/// Recover every image of an occlusion batch directory (its manifest and
/// mask index) into `out_dir`, writing a manifest with the same schema.
pub fn recover_dataset(
    in_dir: &Path,
    strategy: &RecoveryStrategy,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    strategy.validate()?;
    let manifest = crate::dataset::load_manifest(&in_dir.join(MANIFEST_FILE))?;
    let records = read_mask_index(&in_dir.join(MASK_INDEX_FILE))?;
    if records.len() != manifest.len() {
        return Err(Error::dims(manifest.len(), records.len()));
    }
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let samples = manifest
        .samples()
        .par_iter()
        .zip(records.par_iter())
        .map(|(sample, record)| {
            let img = crate::imagecore::read_image(&in_dir.join(&record.image))?;
            let mask = load_mask(in_dir, record)?;
            let out = recover(&img, &mask, strategy)?;
            let name = Path::new(&record.image)
                .file_name()
                .ok_or_else(|| Error::arg(format!("bad image entry {:?}", record.image)))?;
            let path = images_dir.join(name);
            ImageFormat::from_path(&path)?;
            write_image(&path, &out)?;
            Ok(Sample {
                path,
                identity: sample.identity.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = DatasetManifest::with_classes(samples, manifest.classes().to_vec())?;
    out.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(out)
}
