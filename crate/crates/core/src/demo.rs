//! Procedural "synthetic faces" dataset for running the whole pipeline
//! without external data.
//!
//! Every identity is a combination of five facial attributes (skin tone,
//! hair colour, eye colour, nose shade, mouth colour) placed at the spots
//! the occlusion masks target. Codes of different identities differ in at
//! least two attributes. The background is drawn independently per image
//! and carries no identity information.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Sample};
use crate::error::{Error, Result};
use crate::imagecore::{write_image, ImageTensor};
use crate::rng::Rng;

const SKIN: [[f32; 3]; 4] = [
    [0.96, 0.80, 0.69],
    [0.87, 0.67, 0.50],
    [0.66, 0.46, 0.33],
    [0.45, 0.30, 0.22],
];
const HAIR: [[f32; 3]; 4] = [
    [0.10, 0.08, 0.06],
    [0.85, 0.70, 0.30],
    [0.60, 0.20, 0.10],
    [0.55, 0.55, 0.60],
];
const EYES: [[f32; 3]; 4] = [
    [0.10, 0.35, 0.85],
    [0.15, 0.65, 0.20],
    [0.35, 0.20, 0.10],
    [0.70, 0.10, 0.70],
];
const NOSE: [[f32; 3]; 3] = [[0.95, 0.55, 0.55], [0.50, 0.25, 0.20], [0.98, 0.95, 0.80]];
const MOUTH: [[f32; 3]; 3] = [[0.80, 0.05, 0.10], [0.25, 0.05, 0.35], [0.95, 0.55, 0.20]];
const LEVELS: [usize; 5] = [4, 4, 4, 3, 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub classes: usize,
    pub per_class: usize,
    pub size: usize,
    pub seed: u64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            classes: 20,
            per_class: 25,
            size: 32,
            seed: 0,
            noise: 0.03,
        }
    }
}

/// Attribute indices of one identity.
pub type FaceCode = [usize; 5];

/// Greedy selection of `k` codes with pairwise Hamming distance at least
/// `min_distance`, in a seed-dependent order.
pub fn identity_codes(k: usize, min_distance: usize, seed: u64) -> Result<Vec<FaceCode>> {
    let mut all = Vec::new();
    for a in 0..LEVELS[0] {
        for b in 0..LEVELS[1] {
            for c in 0..LEVELS[2] {
                for d in 0..LEVELS[3] {
                    for e in 0..LEVELS[4] {
                        all.push([a, b, c, d, e]);
                    }
                }
            }
        }
    }
    Rng::derived(seed, "demo-codes", 0).shuffle(&mut all);
    let mut chosen: Vec<FaceCode> = Vec::new();
    for code in all {
        let dist = |o: &FaceCode| code.iter().zip(o).filter(|(a, b)| a != b).count();
        if chosen.iter().all(|o| dist(o) >= min_distance) {
            chosen.push(code);
            if chosen.len() == k {
                return Ok(chosen);
            }
        }
    }
    Err(Error::arg(format!(
        "cannot find {k} identities at attribute distance {min_distance}"
    )))
}

/// Codes for `k` identities: distance 3 when possible, else 2.
pub fn demo_codes(k: usize, seed: u64) -> Result<Vec<FaceCode>> {
    identity_codes(k, 3, seed).or_else(|_| identity_codes(k, 2, seed))
}

fn jitter(rng: &mut Rng, c: [f32; 3], amount: f64) -> [f32; 3] {
    c.map(|v| (v as f64 + rng.uniform(-amount, amount)).clamp(0.0, 1.0) as f32)
}

/// Draw one face of identity `code`.
pub fn render_face(code: &FaceCode, size: usize, noise: f64, rng: &mut Rng) -> ImageTensor {
    let s = size as f64;
    let dx = rng.uniform(-0.04, 0.04);
    let dy = rng.uniform(-0.04, 0.04);
    let scale = rng.uniform(0.95, 1.05);
    let bg_a = [rng.unit() as f32, rng.unit() as f32, rng.unit() as f32];
    let bg_b = [rng.unit() as f32, rng.unit() as f32, rng.unit() as f32];
    let bg_angle = rng.uniform(0.0, std::f64::consts::TAU);
    let skin = jitter(rng, SKIN[code[0]], 0.04);
    let hair = jitter(rng, HAIR[code[1]], 0.04);
    let eyes = jitter(rng, EYES[code[2]], 0.04);
    let nose = jitter(rng, NOSE[code[3]], 0.04);
    let mouth = jitter(rng, MOUTH[code[4]], 0.04);
    let noise_field: Vec<f32> = (0..size * size * 3)
        .map(|_| (rng.normal() * noise) as f32)
        .collect();

    let ellipse = |x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64| {
        let a = (x - cx) / rx;
        let b = (y - cy) / ry;
        a * a + b * b <= 1.0
    };
    let mut data = Vec::with_capacity(size * size * 3);
    for row in 0..size {
        for col in 0..size {
            // Face-local coordinates: undo the per-image shift and scale.
            let px = (col as f64 + 0.5) / s;
            let py = (row as f64 + 0.5) / s;
            let x = (px - 0.5 - dx) / scale + 0.5;
            let y = (py - 0.52 - dy) / scale + 0.52;
            let t = ((px - 0.5) * bg_angle.cos() + (py - 0.5) * bg_angle.sin() + 0.75) / 1.5;
            let mut c: [f32; 3] = std::array::from_fn(|i| bg_a[i] + (bg_b[i] - bg_a[i]) * t as f32);
            if ellipse(x, y, 0.5, 0.52, 0.34, 0.42) {
                c = skin;
                if y < 0.30 || (y < 0.42 && !(0.24..=0.76).contains(&x)) {
                    c = hair;
                }
                if ellipse(x, y, 0.32, 0.42, 0.075, 0.055) || ellipse(x, y, 0.68, 0.42, 0.075, 0.055) {
                    c = eyes;
                }
                if (0.44..0.56).contains(&x) && (0.49..0.64).contains(&y) {
                    c = nose;
                }
                if ellipse(x, y, 0.5, 0.78, 0.15, 0.05) {
                    c = mouth;
                }
            }
            for ch in 0..3 {
                let v = c[ch] + noise_field[(row * size + col) * 3 + ch];
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    ImageTensor::new(size, size, 3, data).expect("values clamped to [0, 1]")
}

/// Write `classes x per_class` faces as PPM files plus `manifest.csv`.
pub fn generate_demo_dataset(out_dir: &Path, cfg: &DemoConfig) -> Result<DatasetManifest> {
    if cfg.classes < 2 || cfg.per_class == 0 || cfg.size < 8 {
        return Err(Error::arg(
            "demo dataset needs >= 2 classes, >= 1 image per class and size >= 8",
        ));
    }
    let codes = demo_codes(cfg.classes, cfg.seed)?;
    let width = (cfg.classes - 1).to_string().len().max(2);
    let mut samples = Vec::with_capacity(cfg.classes * cfg.per_class);
    for (k, code) in codes.iter().enumerate() {
        let identity = format!("id{k:0width$}");
        let dir = out_dir.join("images").join(&identity);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..cfg.per_class {
            let mut rng = Rng::derived(cfg.seed, "demo-face", (k * cfg.per_class + i) as u64);
            let img = render_face(code, cfg.size, cfg.noise, &mut rng);
            let path = dir.join(format!("{i:03}.ppm"));
            write_image(&path, &img)?;
            samples.push(Sample {
                path,
                identity: identity.clone(),
            });
        }
    }
    let manifest = DatasetManifest::from_samples(samples)?;
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
