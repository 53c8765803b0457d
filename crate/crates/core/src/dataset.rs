//! Labeled sample manifests, class-size filtering, stratified splitting and
//! batch iteration.
//!
//! A manifest is a CSV file with the header `path,identity`. Relative paths are
//! resolved against the directory holding the manifest. Class indices are
//! assigned by first appearance and stay fixed for every manifest derived from
//! a split, so labels mean the same thing in training and evaluation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{
    apply_augmentation, read_image, resize_bilinear, sample_augmentation, AugmentConfig, ImageTensor,
};
use crate::rng::Rng;

pub const MANIFEST_HEADER: [&str; 2] = ["path", "identity"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub path: PathBuf,
    pub identity: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    samples: Vec<Sample>,
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl DatasetManifest {
    /// Classes are indexed by first appearance; paths must be unique.
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        let mut classes = Vec::new();
        for s in &samples {
            if !classes.contains(&s.identity) {
                classes.push(s.identity.clone());
            }
        }
        Self::with_classes(samples, classes)
    }

    /// Uses a fixed class list, which must cover every sample identity.
    pub fn with_classes(samples: Vec<Sample>, classes: Vec<String>) -> Result<Self> {
        let index: HashMap<String, usize> = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        if index.len() != classes.len() {
            return Err(Error::arg("duplicate class name in class list"));
        }
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(&s.path) {
                return Err(Error::arg(format!("duplicate path {}", s.path.display())));
            }
            if !index.contains_key(&s.identity) {
                return Err(Error::arg(format!("unknown identity {:?}", s.identity)));
            }
        }
        Ok(Self {
            samples,
            classes,
            index,
        })
    }

    pub fn empty() -> Self {
        Self {
            samples: Vec::new(),
            classes: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_index(&self, identity: &str) -> Option<usize> {
        self.index.get(identity).copied()
    }

    pub fn label(&self, i: usize) -> usize {
        self.index[&self.samples[i].identity]
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.classes.len()];
        for s in &self.samples {
            sizes[self.index[&s.identity]] += 1;
        }
        sizes
    }

    /// Write as CSV. Relative sample paths are rewritten relative to the
    /// manifest's directory so that loading resolves them to the same files.
    pub fn write(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(MANIFEST_HEADER).map_err(|e| csv_io(path, e))?;
        for s in &self.samples {
            let p = relative_to(&s.path, base);
            w.write_record([p.to_string_lossy().as_ref(), s.identity.as_str()])
                .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// `path` expressed relative to `base`. Absolute paths outside `base` stay absolute.
fn relative_to(path: &Path, base: &Path) -> PathBuf {
    if base.as_os_str().is_empty() {
        return path.to_path_buf();
    }
    if let Ok(rel) = path.strip_prefix(base) {
        return rel.to_path_buf();
    }
    if path.is_absolute() {
        return path.to_path_buf();
    }
    let (Ok(abs_path), Ok(abs_base)) = (std::path::absolute(path), std::path::absolute(base)) else {
        return path.to_path_buf();
    };
    let (p, b): (Vec<_>, Vec<_>) = (abs_path.components().collect(), abs_base.components().collect());
    let common = p.iter().zip(&b).take_while(|(x, y)| x == y).count();
    if b[common..].iter().any(|c| !matches!(c, Component::Normal(_))) {
        return abs_path;
    }
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    out.extend(&p[common..]);
    out
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}

/// Parse manifest CSV text, resolving relative paths against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            reason: "empty manifest".into(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .transpose()
        .map_err(|e| Error::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .ok_or(Error::Parse {
            line: 1,
            reason: "empty manifest".into(),
        })?;
    if header.iter().map(str::trim).collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::Parse {
            line: 1,
            reason: "expected header \"path,identity\"".into(),
        });
    }
    let mut samples = Vec::new();
    let mut seen = HashMap::new();
    for record in records {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let (raw_path, identity) = (record[0].trim(), record[1].trim());
        if raw_path.is_empty() || identity.is_empty() {
            return Err(Error::Parse {
                line,
                reason: "empty path or identity".into(),
            });
        }
        let path = resolve(base, raw_path);
        if let Some(first) = seen.insert(path.clone(), line) {
            return Err(Error::Parse {
                line,
                reason: format!("duplicate path {raw_path} (first seen on line {first})"),
            });
        }
        samples.push(Sample {
            path,
            identity: identity.to_string(),
        });
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            line: 2,
            reason: "manifest has no samples".into(),
        });
    }
    DatasetManifest::from_samples(samples)
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() || base.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Drop classes with fewer than `min_count` samples; surviving classes keep
/// their relative first-appearance order.
pub fn filter_min_images(m: &DatasetManifest, min_count: usize) -> Result<DatasetManifest> {
    if min_count == 0 {
        return Err(Error::arg("min_count must be at least 1"));
    }
    let sizes = m.class_sizes();
    let samples: Vec<Sample> = m
        .samples
        .iter()
        .filter(|s| sizes[m.index[&s.identity]] >= min_count)
        .cloned()
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    DatasetManifest::from_samples(samples)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub class: String,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "val" => Ok(SplitPart::Val),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::arg(format!("unknown split part {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub seed: u64,
    pub classes: Vec<String>,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub counts: Vec<ClassCounts>,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    seed: u64,
    classes: Vec<String>,
    counts: Vec<ClassCounts>,
    identities: BTreeMap<String, String>,
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

impl DatasetSplit {
    pub fn part(&self, part: SplitPart) -> &[Sample] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        }
    }

    /// Manifest of one part, indexed with the split's full class list.
    pub fn manifest(&self, part: SplitPart) -> DatasetManifest {
        DatasetManifest::with_classes(self.part(part).to_vec(), self.classes.clone())
            .expect("split parts are consistent with the split's classes")
    }

    pub fn to_json(&self) -> String {
        let path = |s: &Sample| s.path.to_string_lossy().into_owned();
        let identities = self
            .train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .map(|s| (path(s), s.identity.clone()))
            .collect();
        let file = SplitFile {
            seed: self.seed,
            classes: self.classes.clone(),
            counts: self.counts.clone(),
            identities,
            train: self.train.iter().map(path).collect(),
            val: self.val.iter().map(path).collect(),
            test: self.test.iter().map(path).collect(),
        };
        let value = serde_json::to_value(file).expect("split serializes");
        serde_json::to_string_pretty(&value).expect("split serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SplitFile = serde_json::from_str(text)?;
        let lookup = |paths: Vec<String>| -> Result<Vec<Sample>> {
            paths
                .into_iter()
                .map(|p| {
                    let identity = file
                        .identities
                        .get(&p)
                        .ok_or_else(|| Error::arg(format!("split path {p} has no identity")))?
                        .clone();
                    Ok(Sample {
                        path: PathBuf::from(p),
                        identity,
                    })
                })
                .collect()
        };
        let split = DatasetSplit {
            seed: file.seed,
            classes: file.classes.clone(),
            train: lookup(file.train.clone())?,
            val: lookup(file.val.clone())?,
            test: lookup(file.test.clone())?,
            counts: file.counts,
        };
        // Validates identities against the class list and path uniqueness.
        let all: Vec<Sample> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .cloned()
            .collect();
        DatasetManifest::with_classes(all, split.classes.clone())?;
        Ok(split)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Per class: order samples by path, shuffle with the class's own stream,
/// then take `test_per_class` for test, `val_per_class` for validation and
/// the remainder for training.
pub fn stratified_split(
    m: &DatasetManifest,
    val_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if m.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let need = val_per_class + test_per_class + 1;
    let mut by_class: Vec<Vec<&Sample>> = vec![Vec::new(); m.num_classes()];
    for s in &m.samples {
        by_class[m.index[&s.identity]].push(s);
    }
    let mut split = DatasetSplit {
        seed,
        classes: m.classes.clone(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        counts: Vec::with_capacity(m.num_classes()),
    };
    for (class, mut members) in by_class.into_iter().enumerate() {
        let name = &m.classes[class];
        if members.len() < need {
            return Err(Error::ClassTooSmall {
                class: name.clone(),
                have: members.len(),
                need,
            });
        }
        members.sort_by(|a, b| a.path.cmp(&b.path));
        Rng::derived(seed, "split", class as u64).shuffle(&mut members);
        let (test, rest) = members.split_at(test_per_class);
        let (val, train) = rest.split_at(val_per_class);
        split.test.extend(test.iter().map(|s| (*s).clone()));
        split.val.extend(val.iter().map(|s| (*s).clone()));
        split.train.extend(train.iter().map(|s| (*s).clone()));
        split.counts.push(ClassCounts {
            class: name.clone(),
            train: train.len(),
            val: val.len(),
            test: test.len(),
        });
    }
    Ok(split)
}

/// Probability vector over classes; one-hot for clean samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::arg("label must have at least one class"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::arg("label probabilities must be finite and nonnegative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("label sums to {sum}, expected 1")));
        }
        Ok(Self { probs })
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability; lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

pub fn encode_label(class_index: usize, num_classes: usize) -> Result<SoftLabel> {
    if class_index >= num_classes {
        return Err(Error::arg(format!(
            "class index {class_index} out of range for {num_classes} classes"
        )));
    }
    let mut probs = vec![0.0; num_classes];
    probs[class_index] = 1.0;
    Ok(SoftLabel { probs })
}

/// Decode an image, force three channels and resize to `size x size`.
pub fn load_sample_image(path: &Path, size: usize) -> Result<ImageTensor> {
    let img = read_image(path)?;
    let img = if img.channels() == 1 {
        let data = img.data().iter().flat_map(|&v| [v, v, v]).collect();
        ImageTensor::new(img.height(), img.width(), 3, data)?
    } else {
        img
    };
    resize_bilinear(&img, size, size)
}

/// Something batches can be drawn from: a sample count and a loader.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn num_classes(&self) -> usize;

    /// Image and class index of sample `i`.
    fn load(&self, i: usize) -> Result<(ImageTensor, usize)>;
}

/// Decodes samples from disk on demand.
pub struct ManifestSource<'a> {
    manifest: &'a DatasetManifest,
    target_size: usize,
}

impl<'a> ManifestSource<'a> {
    pub fn new(manifest: &'a DatasetManifest, target_size: usize) -> Self {
        Self {
            manifest,
            target_size,
        }
    }
}

impl SampleSource for ManifestSource<'_> {
    fn len(&self) -> usize {
        self.manifest.len()
    }

    fn num_classes(&self) -> usize {
        self.manifest.num_classes()
    }

    fn load(&self, i: usize) -> Result<(ImageTensor, usize)> {
        let img = load_sample_image(&self.manifest.samples[i].path, self.target_size)?;
        Ok((img, self.manifest.label(i)))
    }
}

/// Samples already decoded into memory.
pub struct MemorySource {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl MemorySource {
    /// Decode every sample of a manifest once.
    pub fn preload(manifest: &DatasetManifest, target_size: usize) -> Result<Self> {
        use rayon::prelude::*;
        let images = manifest
            .samples
            .par_iter()
            .map(|s| load_sample_image(&s.path, target_size))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            images,
            labels: (0..manifest.len()).map(|i| manifest.label(i)).collect(),
            num_classes: manifest.num_classes(),
        })
    }
}

impl SampleSource for MemorySource {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn load(&self, i: usize) -> Result<(ImageTensor, usize)> {
        Ok((self.images[i].clone(), self.labels[i]))
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<SoftLabel>,
    /// Source indices of the batch members.
    pub indices: Vec<usize>,
}

/// Epoch-shuffled batches; the final short batch is kept.
pub struct Batches<'a, S: SampleSource + ?Sized> {
    source: &'a S,
    order: Vec<usize>,
    batch_size: usize,
    epoch_seed: u64,
    augment: Option<AugmentConfig>,
    pos: usize,
}

impl<'a, S: SampleSource + ?Sized> Batches<'a, S> {
    pub fn new(
        source: &'a S,
        batch_size: usize,
        epoch_seed: u64,
        augment: Option<AugmentConfig>,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::arg("batch_size must be at least 1"));
        }
        let mut order: Vec<usize> = (0..source.len()).collect();
        Rng::derived(epoch_seed, "shuffle", 0).shuffle(&mut order);
        Ok(Self {
            source,
            order,
            batch_size,
            epoch_seed,
            augment,
            pos: 0,
        })
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl<S: SampleSource + ?Sized> Iterator for Batches<'_, S> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        use rayon::prelude::*;
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let start = self.pos;
        self.pos = end;
        let k = self.source.num_classes();
        let loaded: Result<Vec<(ImageTensor, SoftLabel)>> = (start..end)
            .into_par_iter()
            .map(|slot| {
                let (img, class) = self.source.load(self.order[slot])?;
                let img = match &self.augment {
                    Some(cfg) => {
                        let mut rng = Rng::derived(self.epoch_seed, "augment", slot as u64);
                        apply_augmentation(&img, &sample_augmentation(&mut rng, cfg))
                    }
                    None => img,
                };
                Ok((img, encode_label(class, k)?))
            })
            .collect();
        Some(loaded.map(|pairs| {
            let (images, labels) = pairs.into_iter().unzip();
            Batch {
                images,
                labels,
                indices: self.order[start..end].to_vec(),
            }
        }))
    }
}

/// Batches decoded straight from a manifest part.
pub fn iterate_batches<'a>(
    source: &'a ManifestSource<'a>,
    batch_size: usize,
    epoch_seed: u64,
    augment: Option<AugmentConfig>,
) -> Result<Batches<'a, ManifestSource<'a>>> {
    Batches::new(source, batch_size, epoch_seed, augment)
}
