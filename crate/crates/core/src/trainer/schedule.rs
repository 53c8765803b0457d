use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-cycle learning-rate and momentum policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub max_lr: f64,
    pub total_steps: usize,
    pub pct_start: f64,
    pub div_start: f64,
    pub div_final: f64,
    pub momentum_high: f64,
    pub momentum_low: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            max_lr: 5e-3,
            total_steps: 100,
            pct_start: 0.25,
            div_start: 25.0,
            div_final: 1e4,
            momentum_high: 0.95,
            momentum_low: 0.85,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::arg(format!(
                "max_lr must be positive, got {}",
                self.max_lr
            )));
        }
        if self.total_steps == 0 {
            return Err(Error::arg("total_steps must be at least 1"));
        }
        if !(self.pct_start > 0.0 && self.pct_start < 1.0) {
            return Err(Error::arg(format!(
                "pct_start must lie in (0, 1), got {}",
                self.pct_start
            )));
        }
        if !(self.div_start > 1.0 && self.div_final > 1.0) {
            return Err(Error::arg("division factors must exceed 1"));
        }
        if !(0.0..1.0).contains(&self.momentum_low) || !(0.0..1.0).contains(&self.momentum_high) {
            return Err(Error::arg("momentum values must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Step at which the rise ends, as a real number.
    pub fn boundary(&self) -> f64 {
        self.pct_start * self.total_steps as f64
    }
}

/// Cosine interpolation from `a` (t = 0) to `b` (t = 1). Each half is
/// anchored on its nearer endpoint so both endpoints come out exact.
pub fn cosine_anneal(a: f64, b: f64, t: f64) -> f64 {
    let c = (std::f64::consts::PI * t).cos();
    if t <= 0.5 {
        a + (b - a) * (1.0 - c) / 2.0
    } else {
        b + (a - b) * (1.0 + c) / 2.0
    }
}

/// Learning rate and momentum at an integer step in `0..=total_steps`.
pub fn one_cycle(step: usize, cfg: &ScheduleConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    if step > cfg.total_steps {
        return Err(Error::arg(format!(
            "step {step} beyond schedule length {}",
            cfg.total_steps
        )));
    }
    Ok(one_cycle_at(step as f64, cfg))
}

/// Schedule at a fractional step, for inspecting the curve between steps.
pub fn one_cycle_at(step: f64, cfg: &ScheduleConfig) -> (f64, f64) {
    let b = cfg.boundary();
    let start = cfg.max_lr / cfg.div_start;
    let end = cfg.max_lr / cfg.div_final;
    if step <= b {
        let t = step / b;
        (
            cosine_anneal(start, cfg.max_lr, t),
            cosine_anneal(cfg.momentum_high, cfg.momentum_low, t),
        )
    } else {
        let t = (step - b) / (cfg.total_steps as f64 - b);
        (
            cosine_anneal(cfg.max_lr, end, t),
            cosine_anneal(cfg.momentum_low, cfg.momentum_high, t),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<f32>,
    pub step: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl OptimizerState {
    pub fn new(num_params: usize) -> Self {
        Self {
            velocity: vec![0.0; num_params],
            step: 0,
            lr: 0.0,
            momentum: 0.0,
        }
    }
}

/// `v = m v + g; w = w - lr v` over every index outside `skip`.
pub fn sgd_momentum_step(
    weights: &mut [f32],
    grads: &[f32],
    state: &mut OptimizerState,
    skip: &[std::ops::Range<usize>],
) -> Result<()> {
    if weights.len() != grads.len() {
        return Err(Error::dims(weights.len(), grads.len()));
    }
    if state.velocity.len() != weights.len() {
        return Err(Error::dims(weights.len(), state.velocity.len()));
    }
    let m = state.momentum as f32;
    let lr = state.lr as f32;
    let mut start = 0;
    let mut ranges: Vec<_> = skip.to_vec();
    ranges.sort_by_key(|r| r.start);
    ranges.push(weights.len()..weights.len());
    for r in ranges {
        let end = r.start.max(start);
        for i in start..end {
            let v = m * state.velocity[i] + grads[i];
            state.velocity[i] = v;
            weights[i] -= lr * v;
        }
        start = start.max(r.end);
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(total: usize) -> ScheduleConfig {
        ScheduleConfig {
            total_steps: total,
            ..Default::default()
        }
    }

    #[test]
    fn endpoints_and_peak_are_exact() {
        let c = cfg(400);
        assert_eq!(one_cycle(0, &c).unwrap(), (5e-3 / 25.0, 0.95));
        assert_eq!(one_cycle(100, &c).unwrap(), (5e-3, 0.85));
        assert_eq!(one_cycle(400, &c).unwrap(), (5e-3 / 1e4, 0.95));
        assert_eq!(one_cycle(0, &c).unwrap().0, 2e-4);
        assert_eq!(one_cycle(400, &c).unwrap().0, 5e-7);
        assert!(one_cycle(401, &c).is_err());
    }

    #[test]
    fn curve_is_continuous_and_unimodal() {
        let c = cfg(37);
        let b = c.boundary();
        let (l1, m1) = one_cycle_at(b, &c);
        let (l2, m2) = one_cycle_at(b + 1e-9, &c);
        assert!((l1 - l2).abs() < 1e-9 && (m1 - m2).abs() < 1e-9);
        let mut prev = 0.0;
        for s in 0..=37 {
            let (lr, _) = one_cycle(s, &c).unwrap();
            if (s as f64) <= b {
                assert!(lr >= prev);
            } else {
                assert!(lr <= prev);
            }
            prev = lr;
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(one_cycle(
            0,
            &ScheduleConfig {
                pct_start: 1.0,
                ..cfg(10)
            }
        )
        .is_err());
        assert!(one_cycle(
            0,
            &ScheduleConfig {
                div_start: 1.0,
                ..cfg(10)
            }
        )
        .is_err());
        assert!(one_cycle(
            0,
            &ScheduleConfig {
                max_lr: 0.0,
                ..cfg(10)
            }
        )
        .is_err());
    }

    #[test]
    fn sgd_examples() {
        let mut w = vec![1.0f32, 2.0];
        let mut st = OptimizerState {
            lr: 0.5,
            ..OptimizerState::new(2)
        };
        sgd_momentum_step(&mut w, &[0.2, -0.4], &mut st, &[]).unwrap();
        assert_eq!(w, vec![0.9, 2.2]);

        let mut w = vec![3.0f32];
        let mut st = OptimizerState {
            lr: 0.1,
            momentum: 0.9,
            ..OptimizerState::new(1)
        };
        sgd_momentum_step(&mut w, &[0.0], &mut st, &[]).unwrap();
        assert_eq!(w, vec![3.0]);

        let mut w = vec![0.0f64 as f32];
        let mut st = OptimizerState {
            lr: 0.1,
            momentum: 0.9,
            ..OptimizerState::new(1)
        };
        sgd_momentum_step(&mut w, &[1.0], &mut st, &[]).unwrap();
        sgd_momentum_step(&mut w, &[1.0], &mut st, &[]).unwrap();
        assert!((w[0] + 0.1 * 2.9).abs() < 1e-6);
        assert_eq!(st.step, 2);
    }

    #[test]
    fn skipped_ranges_are_untouched() {
        let mut w = vec![1.0f32; 6];
        let mut st = OptimizerState {
            lr: 1.0,
            ..OptimizerState::new(6)
        };
        sgd_momentum_step(&mut w, &[1.0; 6], &mut st, &[4..6, 0..2]).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
    }
}
