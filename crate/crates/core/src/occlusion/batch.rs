use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_mask, generate_mask, MaskBitmap, MaskGeometry, MaskKind, Side};
use crate::dataset::{DatasetManifest, Sample};
use crate::error::{Error, Result};
use crate::imagecore::{read_image, write_image, ImageFormat};
use crate::rng::Rng;

pub const MASK_INDEX_FILE: &str = "masks.json";
pub const MANIFEST_FILE: &str = "manifest.csv";

/// One sidecar record: which mask was realized for which output image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub sample: usize,
    pub kind: u8,
    pub side: Side,
    pub seed: u64,
    /// Occluded image, relative to the output directory.
    pub image: String,
    /// P5 mask file, relative to the output directory.
    pub mask: String,
}

#[derive(Debug, Clone)]
pub struct OcclusionReport {
    pub manifest: DatasetManifest,
    pub records: Vec<MaskRecord>,
    /// Inputs that could not be processed, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

/// Stream used for sample `index` of an occlusion batch.
pub fn occlusion_rng(seed: u64, index: usize) -> Rng {
    Rng::derived(seed, "occlusion", index as u64)
}

/// Write one occluded copy of every manifest image under `out_dir/images`,
/// its mask under `out_dir/masks`, the sidecar index and the new manifest.
///
/// Per-file failures are collected; the call fails only when every file fails.
pub fn occlude_dataset(
    manifest: &DatasetManifest,
    id: u8,
    seed: u64,
    out_dir: &Path,
    geometry: &MaskGeometry,
) -> Result<OcclusionReport> {
    MaskKind::new(
        id,
        if MaskKind::is_sided(id) {
            Side::Left
        } else {
            Side::None
        },
    )?;
    geometry.validate()?;
    if manifest.is_empty() {
        return Ok(OcclusionReport {
            manifest: DatasetManifest::empty(),
            records: Vec::new(),
            failures: Vec::new(),
        });
    }
    for sub in ["images", "masks"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let results: Vec<Result<(Sample, MaskRecord)>> = manifest
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, sample)| occlude_one(i, sample, id, seed, out_dir, geometry))
        .collect();

    let mut samples = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (result, src) in results.into_iter().zip(manifest.samples()) {
        match result {
            Ok((s, r)) => {
                samples.push(s);
                records.push(r);
            }
            Err(e) => failures.push((src.path.clone(), e.to_string())),
        }
    }
    if samples.is_empty() {
        return Err(Error::BatchFailed {
            failed: failures.len(),
            first: failures[0].1.clone(),
        });
    }
    let out_manifest = DatasetManifest::with_classes(samples, manifest.classes().to_vec())?;
    out_manifest.write(&out_dir.join(MANIFEST_FILE))?;
    write_mask_index(&out_dir.join(MASK_INDEX_FILE), &records)?;
    Ok(OcclusionReport {
        manifest: out_manifest,
        records,
        failures,
    })
}

fn occlude_one(
    index: usize,
    sample: &Sample,
    id: u8,
    seed: u64,
    out_dir: &Path,
    geometry: &MaskGeometry,
) -> Result<(Sample, MaskRecord)> {
    let img = read_image(&sample.path)?;
    let mut rng = occlusion_rng(seed, index);
    let mask = generate_mask(id, img.height(), img.width(), &mut rng, geometry)?;
    let occluded = apply_mask(&img, &mask, geometry.fill)?;

    let stem = sample
        .path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let format = ImageFormat::from_path(&sample.path)?;
    let image_rel = format!("images/{index:05}_{stem}.{}", format.extension(img.channels()));
    let mask_rel = format!("masks/{index:05}_{stem}.pgm");
    let image_path = out_dir.join(&image_rel);
    write_image(&image_path, &occluded)?;
    write_image(&out_dir.join(&mask_rel), &mask.to_image())?;

    Ok((
        Sample {
            path: image_path,
            identity: sample.identity.clone(),
        },
        MaskRecord {
            sample: index,
            kind: id,
            side: mask.kind.side,
            seed,
            image: image_rel,
            mask: mask_rel,
        },
    ))
}

pub fn write_mask_index(path: &Path, records: &[MaskRecord]) -> Result<()> {
    let value = serde_json::to_value(records)?;
    let text = serde_json::to_string_pretty(&value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_mask_index(path: &Path) -> Result<Vec<MaskRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Load the mask written for `record`, relative to the batch output directory.
pub fn load_mask(dir: &Path, record: &MaskRecord) -> Result<MaskBitmap> {
    let img = read_image(&dir.join(&record.mask))?;
    MaskBitmap::from_image(MaskKind::new(record.kind, record.side)?, &img)
}
