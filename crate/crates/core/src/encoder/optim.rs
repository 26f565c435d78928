//! AdamW with a linear warmup / linear decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use crate::scalar::Scalar;

/// Linear ramp from 0 to `peak_lr` over the first `warmup_ratio * total_steps`
/// steps, then linear decay to 0 at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmupLinear {
    pub peak_lr: f64,
    pub warmup_ratio: f64,
    pub total_steps: usize,
}

impl WarmupLinear {
    pub fn warmup_steps(&self) -> usize {
        (self.warmup_ratio * self.total_steps as f64).ceil() as usize
    }

    pub fn lr(&self, step: usize) -> f64 {
        let warmup = self.warmup_steps();
        if step < warmup {
            return self.peak_lr * step as f64 / warmup as f64;
        }
        let remaining = self.total_steps.saturating_sub(step) as f64;
        let span = self.total_steps.saturating_sub(warmup).max(1) as f64;
        self.peak_lr * (remaining / span).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW<F> {
    pub config: AdamWConfig,
    first: Gradients<F>,
    second: Gradients<F>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(store: &ParamStore<F>, config: AdamWConfig) -> Self {
        Self {
            config,
            first: Gradients::zeros_like(store),
            second: Gradients::zeros_like(store),
        }
    }

    /// One update from the gradients accumulated in `store`; `step` is 0-based.
    /// Weight decay is decoupled and scaled by the scheduled rate; it applies
    /// only to parameters flagged for decay. Returns the rate used.
    pub fn step(&mut self, store: &mut ParamStore<F>, step: usize, schedule: &WarmupLinear) -> f64 {
        let lr = schedule.lr(step);
        let c = self.config;
        let t = (step + 1) as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let (one_b1, one_b2) = (F::of(1.0 - c.beta1), F::of(1.0 - c.beta2));
        let step_size = F::of(lr / bias1);
        let bias2_sqrt = F::of(bias2.sqrt());
        let eps = F::of(c.eps);
        let decay = F::of(lr * c.weight_decay);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let g = store.grad(id).clone();
            let m = self.first.get_mut(id);
            m.zip_mut_with(&g, |m, &g| *m = b1 * *m + one_b1 * g);
            let v = self.second.get_mut(id);
            v.zip_mut_with(&g, |v, &g| *v = b2 * *v + one_b2 * g * g);
            let apply_decay = store.param(id).decay && c.weight_decay != 0.0;
            let (m, v) = (self.first.get(id), self.second.get(id));
            let value = store.value_mut(id);
            ndarray::Zip::from(value).and(m).and(v).for_each(|p, &m, &v| {
                if apply_decay {
                    *p -= decay * *p;
                }
                *p -= step_size * m / (v.sqrt() / bias2_sqrt + eps);
            });
        }
        lr
    }
}
