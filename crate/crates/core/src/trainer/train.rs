use serde::{Deserialize, Serialize};

use super::model::{compute_gradients, forward, init_model, ModelParams};
use super::schedule::{one_cycle, sgd_momentum_step, OptimizerState, ScheduleConfig};
use crate::cutmix::{cutmix_batch, CutmixConfig};
use crate::dataset::{Batches, DatasetSplit, MemorySource, SampleSource, SplitPart};
use crate::error::{Error, Result};
use crate::imagecore::AugmentConfig;
use crate::rng::{mix_seed, stream_id, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: String,
    pub epochs_frozen: usize,
    pub epochs_unfrozen: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    /// Peak rate of the frozen phase; `max_lr / 10` when unset.
    pub frozen_lr: Option<f64>,
    pub weight_decay: f64,
    pub pct_start: f64,
    pub div_start: f64,
    pub div_final: f64,
    pub momentum_high: f64,
    pub momentum_low: f64,
    pub cutmix: CutmixConfig,
    /// Random augmentation of training batches; `None` disables it.
    pub augment: Option<AugmentConfig>,
    pub seed: u64,
    pub target_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let s = ScheduleConfig::default();
        Self {
            arch: "smallconv".into(),
            epochs_frozen: 1,
            epochs_unfrozen: 25,
            batch_size: 64,
            max_lr: s.max_lr,
            frozen_lr: None,
            weight_decay: 0.0,
            pct_start: s.pct_start,
            div_start: s.div_start,
            div_final: s.div_final,
            momentum_high: s.momentum_high,
            momentum_low: s.momentum_low,
            cutmix: CutmixConfig::default(),
            augment: Some(AugmentConfig::default()),
            seed: 0,
            target_size: 32,
        }
    }
}

impl TrainConfig {
    fn schedule(&self, max_lr: f64, total_steps: usize) -> ScheduleConfig {
        ScheduleConfig {
            max_lr,
            total_steps,
            pct_start: self.pct_start,
            div_start: self.div_start,
            div_final: self.div_final,
            momentum_high: self.momentum_high,
            momentum_low: self.momentum_low,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs_frozen + self.epochs_unfrozen == 0 {
            return Err(Error::arg("training needs at least one epoch"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch_size must be at least 1"));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::arg("weight_decay must be nonnegative"));
        }
        if self.cutmix.enabled && (self.cutmix.alpha.is_nan() || self.cutmix.alpha <= 0.0) {
            return Err(Error::arg("cutmix alpha must be positive"));
        }
        self.schedule(self.max_lr, 1).validate()?;
        if let Some(lr) = self.frozen_lr {
            self.schedule(lr, 1).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Frozen,
    Unfrozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub loss: f64,
    pub mixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub val_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned.
    pub best_epoch: usize,
}

/// Top-1 error of `params` on every sample of a source.
pub fn top1_error<S: SampleSource + ?Sized>(params: &ModelParams, source: &S) -> Result<f64> {
    if source.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut wrong = 0usize;
    for start in (0..source.len()).step_by(64) {
        let end = (start + 64).min(source.len());
        let loaded = (start..end).map(|i| source.load(i)).collect::<Result<Vec<_>>>()?;
        let (images, labels): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
        let logits = forward(params, &images)?;
        wrong += crate::evaluator::top_k_misses(&logits, &labels, 1)?;
    }
    Ok(wrong as f64 / source.len() as f64)
}

/// Train on a split: frozen-backbone epochs, then full epochs, each phase
/// with its own one-cycle schedule. Returns the best-validation weights.
pub fn train(split: &DatasetSplit, cfg: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    let train_m = split.manifest(SplitPart::Train);
    if train_m.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let train_src = MemorySource::preload(&train_m, cfg.target_size)?;
    let val_src = MemorySource::preload(&split.manifest(SplitPart::Val), cfg.target_size)?;
    let mut params = init_model(&cfg.arch, cfg.target_size, split.classes.len(), cfg.seed)?;
    params.classes = split.classes.clone();
    let history = train_sources(&mut params, &train_src, &val_src, cfg)?;
    Ok((params, history))
}

/// Train `params` in place on preloaded sources.
pub fn train_sources<S: SampleSource + ?Sized, V: SampleSource + ?Sized>(
    params: &mut ModelParams,
    train_src: &S,
    val_src: &V,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_src.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train_src.num_classes() != params.num_classes() {
        return Err(Error::dims(params.num_classes(), train_src.num_classes()));
    }
    let steps_per_epoch = train_src.len().div_ceil(cfg.batch_size);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Vec<f32>, usize)> = None;
    let mut step = 0usize;
    let mut epoch = 0usize;
    let phases = [
        (
            Phase::Frozen,
            cfg.epochs_frozen,
            cfg.frozen_lr.unwrap_or(cfg.max_lr / 10.0),
        ),
        (Phase::Unfrozen, cfg.epochs_unfrozen, cfg.max_lr),
    ];
    for (phase, epochs, max_lr) in phases {
        if epochs == 0 {
            continue;
        }
        params.frozen.backbone = phase == Phase::Frozen;
        let schedule = cfg.schedule(max_lr, epochs * steps_per_epoch);
        let mut state = OptimizerState::new(params.weights.len());
        let mix = cfg.cutmix.enabled && (phase == Phase::Unfrozen || cfg.cutmix.in_frozen_phase);
        for _ in 0..epochs {
            let epoch_seed = mix_seed(cfg.seed, &[stream_id("epoch", epoch as u64)]);
            let mut loss_sum = 0.0;
            let mut batches = 0usize;
            for batch in Batches::new(train_src, cfg.batch_size, epoch_seed, cfg.augment)? {
                let batch = batch?;
                let (images, labels, mixed) = if mix && batch.images.len() >= 2 {
                    let mut rng = Rng::derived(cfg.seed, "cutmix", step as u64);
                    let out = cutmix_batch(&batch.images, &batch.labels, cfg.cutmix.alpha, &mut rng)?;
                    let (i, l) = out.into_iter().map(|m| (m.image, m.label)).unzip();
                    (i, l, true)
                } else {
                    (batch.images, batch.labels, false)
                };
                let (loss, mut grad) = compute_gradients(params, &images, &labels)?;
                if !loss.is_finite() {
                    return Err(Error::arg(format!(
                        "training diverged at step {step} (loss {loss}); lower max_lr"
                    )));
                }
                if cfg.weight_decay > 0.0 {
                    let wd = cfg.weight_decay as f32;
                    for (g, w) in grad.iter_mut().zip(&params.weights) {
                        *g += wd * w;
                    }
                }
                let (lr, momentum) = one_cycle(state.step, &schedule)?;
                state.lr = lr;
                state.momentum = momentum;
                let frozen = params.frozen_ranges();
                sgd_momentum_step(&mut params.weights, &grad, &mut state, &frozen)?;
                history.steps.push(StepRecord {
                    step,
                    epoch,
                    lr,
                    momentum,
                    loss,
                    mixed,
                });
                loss_sum += loss;
                batches += 1;
                step += 1;
            }
            let val_error = if val_src.is_empty() {
                None
            } else {
                Some(top1_error(params, val_src)?)
            };
            let train_loss = loss_sum / batches as f64;
            match val_error {
                Some(e) => {
                    log::info!("epoch {epoch} ({phase:?}): train loss {train_loss:.4}, val error {e:.4}")
                }
                None => log::info!("epoch {epoch} ({phase:?}): train loss {train_loss:.4}"),
            }
            let score = val_error.unwrap_or(0.0);
            if best
                .as_ref()
                .is_none_or(|(b, _, _)| score < *b || val_error.is_none())
            {
                best = Some((score, params.weights.clone(), epoch));
            }
            history.epochs.push(EpochRecord {
                epoch,
                phase,
                train_loss,
                val_error,
            });
            epoch += 1;
        }
    }
    params.frozen = Default::default();
    if let Some((_, weights, e)) = best {
        params.weights = weights;
        history.best_epoch = e;
    }
    Ok(history)
}
