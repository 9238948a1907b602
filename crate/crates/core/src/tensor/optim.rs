use serde::{Deserialize, Serialize};

use super::{Float, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<F = f32> {
    pub step: u64,
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
}

#[derive(Clone, Debug)]
pub struct Adam<F = f32> {
    pub config: AdamConfig,
    pub state: AdamState<F>,
}

impl<F: Float> Adam<F> {
    pub fn new(config: AdamConfig, params: &ParamStore<F>) -> Self {
        let zeros = || params.iter().map(|p| vec![F::zero(); p.value.numel()]).collect();
        Self {
            config,
            state: AdamState {
                step: 0,
                m: zeros(),
                v: zeros(),
            },
        }
    }

    /// One bias-corrected Adam update. Parameters without a gradient are left
    /// untouched, moments included.
    pub fn step(&mut self, params: &mut ParamStore<F>) {
        let c = self.config;
        self.state.step += 1;
        let t = self.state.step as i32;
        let (b1, b2) = (F::from_f64c(c.beta1), F::from_f64c(c.beta2));
        let bc1 = F::from_f64c(1.0 - c.beta1.powi(t));
        let bc2 = F::from_f64c(1.0 - c.beta2.powi(t));
        let (lr, eps) = (F::from_f64c(c.lr), F::from_f64c(c.eps));
        let one = F::one();
        for ((p, m), v) in params.iter_mut().zip(&mut self.state.m).zip(&mut self.state.v) {
            let Some(g) = &p.grad else { continue };
            for (((w, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
