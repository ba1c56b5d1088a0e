//! AdamW with global gradient-norm clipping and linear warm-up.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global ℓ2 threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            beta1: 0.0,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: Some(1.0),
            warmup_steps: 0,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }

    pub fn with_warmup(mut self, steps: u64) -> Self {
        self.warmup_steps = steps;
        self
    }
}

/// What happened during one call to [`AdamW::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// `false` when the gradient contained NaN or ±∞ and nothing was changed.
    pub applied: bool,
    /// Norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

pub fn global_norm(g: &[f64]) -> f64 {
    math::sqrt(g.iter().map(|x| x * x).sum())
}

/// Rescales `g` in place so its ℓ2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let n = global_norm(g);
    if n > max_norm {
        let s = max_norm / n;
        g.iter_mut().for_each(|x| *x *= s);
    }
    n
}

impl AdamW {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            steps: 0,
        }
    }

    /// Number of applied (non-skipped) steps.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn current_lr(&self) -> f64 {
        let w = self.config.warmup_steps;
        if w == 0 {
            self.config.lr
        } else {
            self.config.lr * ((self.steps + 1) as f64 / w as f64).min(1.0)
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<StepReport> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        if !grads.iter().all(|g| g.is_finite()) {
            return Ok(StepReport {
                applied: false,
                grad_norm: f64::NAN,
                clipped: false,
            });
        }
        let mut g = grads.to_vec();
        let (grad_norm, clipped) = match self.config.clip_norm {
            Some(c) => {
                let n = clip_global_norm(&mut g, c);
                (n, n > c)
            }
            None => (global_norm(&g), false),
        };

        let lr = self.current_lr();
        self.steps += 1;
        let c = &self.config;
        let bc1 = 1.0 - math::powi(c.beta1, self.steps as i32);
        let bc2 = 1.0 - math::powi(c.beta2, self.steps as i32);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * (mh / (math::sqrt(vh) + c.eps) + c.weight_decay * params[i]);
        }
        Ok(StepReport {
            applied: true,
            grad_norm,
            clipped,
        })
    }
}
