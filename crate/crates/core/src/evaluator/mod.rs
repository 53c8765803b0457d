//! Top-k error metrics, per-condition evaluation and report files.

mod chart;
mod report;

pub use chart::{chart_bars, render_chart, ChartBar, CHART_HEIGHT, CHART_WIDTH, PLOT_BOTTOM, PLOT_TOP};
pub use report::{
    compare_models, load_report, write_comparison, write_report, Comparison, ComparisonRow, ConditionResult,
    EvalReport, ModelInfo,
};

use crate::dataset::{DatasetManifest, ManifestSource, SampleSource};
use crate::error::{Error, Result};
use crate::trainer::{forward, ModelParams};

/// Whether `label` is among the `k` highest logits. Ties rank the lower
/// class index first.
pub fn in_top_k<T: PartialOrd>(logits: &[T], label: usize, k: usize) -> bool {
    let t = &logits[label];
    let rank = logits
        .iter()
        .enumerate()
        .filter(|&(j, v)| v > t || (v == t && j < label))
        .count();
    rank < k
}

/// Number of rows whose label is outside the top `k`.
pub fn top_k_misses<L: AsRef<[f32]>>(logits: &[L], labels: &[usize], k: usize) -> Result<usize> {
    if logits.len() != labels.len() {
        return Err(Error::dims(logits.len(), labels.len()));
    }
    let mut misses = 0;
    for (row, &label) in logits.iter().zip(labels) {
        let row = row.as_ref();
        if k == 0 || k > row.len() {
            return Err(Error::arg(format!("k = {k} outside 1..={}", row.len())));
        }
        if label >= row.len() {
            return Err(Error::arg(format!("label {label} outside {} classes", row.len())));
        }
        if !in_top_k(row, label, k) {
            misses += 1;
        }
    }
    Ok(misses)
}

/// Fraction of rows whose label is outside the top `k`.
pub fn topk_error<L: AsRef<[f32]>>(logits: &[L], labels: &[usize], k: usize) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::arg("no predictions"));
    }
    Ok(top_k_misses(logits, labels, k)? as f64 / logits.len() as f64)
}

/// Output index for every sample, matched by identity name when the model
/// carries class names.
fn model_labels(params: &ModelParams, manifest: &DatasetManifest) -> Result<Vec<usize>> {
    if params.classes.is_empty() {
        if manifest.num_classes() != params.num_classes() {
            return Err(Error::dims(
                format!("{} classes", params.num_classes()),
                format!("{} classes", manifest.num_classes()),
            ));
        }
        return Ok((0..manifest.len()).map(|i| manifest.label(i)).collect());
    }
    manifest
        .samples()
        .iter()
        .map(|s| {
            params
                .classes
                .iter()
                .position(|c| *c == s.identity)
                .ok_or_else(|| Error::arg(format!("identity {:?} unknown to the model", s.identity)))
        })
        .collect()
}

/// Top-1 and top-5 error of a model over a manifest, without augmentation.
/// Top-5 falls back to top-K when the model has fewer than five classes.
pub fn evaluate_condition(
    params: &ModelParams,
    manifest: &DatasetManifest,
    condition: &str,
    target_size: usize,
) -> Result<ConditionResult> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = model_labels(params, manifest)?;
    let source = ManifestSource::new(manifest, target_size);
    let k5 = 5.min(params.num_classes());
    let (mut miss1, mut miss5) = (0, 0);
    for start in (0..manifest.len()).step_by(256) {
        let end = (start + 256).min(manifest.len());
        let images = (start..end)
            .map(|i| source.load(i).map(|(img, _)| img))
            .collect::<Result<Vec<_>>>()?;
        let logits = forward(params, &images)?;
        miss1 += top_k_misses(&logits, &labels[start..end], 1)?;
        miss5 += top_k_misses(&logits, &labels[start..end], k5)?;
    }
    let n = manifest.len();
    Ok(ConditionResult {
        id: condition.to_string(),
        n,
        top1_error: miss1 as f64 / n as f64,
        top5_error: miss5 as f64 / n as f64,
    })
}
