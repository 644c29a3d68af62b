use serde::{Deserialize, Serialize};

use super::tape::{Gradients, ParamStore};

/// Step decay: `base * decay^floor(epoch / period)` with
/// `period = round(total_epochs * delay_factor)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub delay_factor: f64,
    pub total_epochs: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 0.01,
            decay: 0.95,
            delay_factor: 0.1,
            total_epochs: 2000,
        }
    }
}

impl LrSchedule {
    pub fn period(&self) -> usize {
        ((self.total_epochs as f64 * self.delay_factor).round() as usize).max(1)
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.base * self.decay.powi((epoch / self.period()) as i32)
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, schedule: LrSchedule) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .ids()
            .map(|id| vec![0.0; store.get(id).len()])
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update; returns `false` and leaves everything untouched
    /// when a gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, epoch: usize) -> bool {
        if !grads.is_finite() {
            log::warn!("skipping optimizer step with non-finite gradient");
            return false;
        }
        self.t += 1;
        let lr = self.schedule.learning_rate(epoch);
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let k = id.index();
            let g = grads.get(id);
            let values = &mut store.get_mut(id).values;
            for (((p, g), m), v) in values
                .iter_mut()
                .zip(g)
                .zip(&mut self.m[k])
                .zip(&mut self.v[k])
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
        true
    }
}

/// Rescales `grads` to at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
