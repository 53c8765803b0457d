use serde::{Deserialize, Serialize};

use super::model::{compute_gradients, ModelParams};
use super::schedule::{sgd_momentum_step, OptimizerState};
use crate::dataset::{Batches, SampleSource};
use crate::error::{Error, Result};

/// Something with a loss and gradient over a flat parameter vector.
pub trait Objective {
    /// Loss and gradient at `weights` for sweep iteration `iter`.
    fn loss_and_grad(&mut self, weights: &[f32], iter: usize) -> Result<(f64, Vec<f32>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrFindConfig {
    pub start_lr: f64,
    pub end_lr: f64,
    pub num_iters: usize,
    pub smoothing: f64,
    pub momentum: f64,
    /// Stop once the smoothed loss exceeds this multiple of the best.
    pub divergence_factor: f64,
}

impl Default for LrFindConfig {
    fn default() -> Self {
        Self {
            start_lr: 1e-7,
            end_lr: 10.0,
            num_iters: 100,
            smoothing: 0.98,
            momentum: 0.9,
            divergence_factor: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrPoint {
    pub lr: f64,
    pub loss: f64,
    pub smoothed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrFindResult {
    pub suggestion: f64,
    pub curve: Vec<LrPoint>,
}

pub fn lr_grid(cfg: &LrFindConfig, i: usize) -> f64 {
    if cfg.num_iters == 1 {
        return cfg.start_lr;
    }
    let ratio = (cfg.end_lr / cfg.start_lr).powf(1.0 / (cfg.num_iters - 1) as f64);
    cfg.start_lr * ratio.powi(i as i32)
}

/// Exponential learning-rate sweep on a copy of `weights`. The suggestion is
/// the rate where the smoothed loss falls fastest.
pub fn lr_find<O: Objective>(weights: &[f32], objective: &mut O, cfg: &LrFindConfig) -> Result<LrFindResult> {
    if !(cfg.start_lr > 0.0 && cfg.end_lr > cfg.start_lr) {
        return Err(Error::arg("lr sweep needs 0 < start_lr < end_lr"));
    }
    if cfg.num_iters < 2 {
        return Err(Error::arg("lr sweep needs at least 2 iterations"));
    }
    if !(0.0..1.0).contains(&cfg.smoothing) {
        return Err(Error::arg("smoothing must lie in [0, 1)"));
    }
    let mut w = weights.to_vec();
    let mut state = OptimizerState::new(w.len());
    state.momentum = cfg.momentum;
    let mut curve = Vec::new();
    let mut avg = 0.0;
    let mut best = f64::INFINITY;
    for i in 0..cfg.num_iters {
        let lr = lr_grid(cfg, i);
        let (loss, grad) = objective.loss_and_grad(&w, i)?;
        if !loss.is_finite() {
            if i == 0 {
                return Err(Error::DivergentSweep {
                    start_lr: cfg.start_lr,
                });
            }
            break;
        }
        avg = cfg.smoothing * avg + (1.0 - cfg.smoothing) * loss;
        let smoothed = avg / (1.0 - cfg.smoothing.powi(i as i32 + 1));
        curve.push(LrPoint { lr, loss, smoothed });
        if i > 0 && smoothed > cfg.divergence_factor * best {
            break;
        }
        best = best.min(smoothed);
        state.lr = lr;
        sgd_momentum_step(&mut w, &grad, &mut state, &[])?;
    }
    if curve.len() < 3 {
        return Err(Error::DivergentSweep {
            start_lr: cfg.start_lr,
        });
    }
    Ok(LrFindResult {
        suggestion: steepest_descent_lr(&curve),
        curve,
    })
}

/// Learning rate at the most negative slope of the smoothed loss against
/// `log lr`, using central differences inside and one-sided at the ends.
pub fn steepest_descent_lr(curve: &[LrPoint]) -> f64 {
    let n = curve.len();
    if n < 2 {
        return curve.first().map_or(0.0, |p| p.lr);
    }
    let x: Vec<f64> = curve.iter().map(|p| p.lr.ln()).collect();
    let y: Vec<f64> = curve.iter().map(|p| p.smoothed).collect();
    let slope = |i: usize| {
        let (a, b) = match i {
            0 => (0, 1),
            i if i == n - 1 => (n - 2, n - 1),
            i => (i - 1, i + 1),
        };
        (y[b] - y[a]) / (x[b] - x[a])
    };
    let mut best = 0;
    let mut best_slope = f64::INFINITY;
    for i in 0..n {
        let s = slope(i);
        if s < best_slope {
            best_slope = s;
            best = i;
        }
    }
    curve[best].lr
}

/// Minibatch objective over a sample source; batch `i` of the sweep is drawn
/// from successive shuffled epochs.
pub struct ModelObjective<'a, S: SampleSource + ?Sized> {
    params: ModelParams,
    source: &'a S,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    pending: Vec<crate::dataset::Batch>,
}

impl<'a, S: SampleSource + ?Sized> ModelObjective<'a, S> {
    pub fn new(params: &ModelParams, source: &'a S, batch_size: usize, seed: u64) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if batch_size == 0 {
            return Err(Error::arg("batch_size must be at least 1"));
        }
        Ok(Self {
            params: params.clone(),
            source,
            batch_size,
            seed,
            epoch: 0,
            pending: Vec::new(),
        })
    }
}

impl<S: SampleSource + ?Sized> Objective for ModelObjective<'_, S> {
    fn loss_and_grad(&mut self, weights: &[f32], _iter: usize) -> Result<(f64, Vec<f32>)> {
        if self.pending.is_empty() {
            let epoch_seed = crate::rng::mix_seed(self.seed, &[crate::rng::stream_id("lr_find", self.epoch)]);
            self.epoch += 1;
            let mut batches =
                Batches::new(self.source, self.batch_size, epoch_seed, None)?.collect::<Result<Vec<_>>>()?;
            batches.reverse();
            self.pending = batches;
        }
        let batch = self.pending.pop().expect("source is not empty");
        self.params.weights.copy_from_slice(weights);
        compute_gradients(&self.params, &batch.images, &batch.labels)
    }
}

/// Sweep for a model over a sample source; `params` is left untouched.
pub fn lr_find_model<S: SampleSource + ?Sized>(
    params: &ModelParams,
    source: &S,
    batch_size: usize,
    seed: u64,
    cfg: &LrFindConfig,
) -> Result<LrFindResult> {
    let mut objective = ModelObjective::new(params, source, batch_size, seed)?;
    lr_find(&params.weights, &mut objective, cfg)
}
