//! Adam with a step-halving learning-rate schedule.

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// The learning rate halves every `halving_period` steps; 0 disables it.
    pub halving_period: u64,
    pub state: AdamState,
}

/// Moment estimates and the number of steps taken.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl AdamState {
    pub fn zeros_like(params: &ParamStore<f32>) -> Self {
        AdamState {
            step: 0,
            m: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
            v: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }
}

impl Adam {
    pub fn new(params: &ParamStore<f32>, lr: f64, beta1: f64, beta2: f64, halving_period: u64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            halving_period,
            state: AdamState::zeros_like(params),
        }
    }

    /// Learning rate used at (zero-based) step `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        match self.halving_period {
            0 => self.lr,
            p => self.lr * 0.5f64.powi((step / p).min(1000) as i32),
        }
    }

    /// One update of every parameter from its gradient; returns the rate used.
    pub fn step(&mut self, params: &mut ParamStore<f32>, grads: &[Tensor<f32>]) -> Result<f64> {
        if grads.len() != params.len() || self.state.m.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gradients / {} moments for {} parameters",
                grads.len(),
                self.state.m.len(),
                params.len()
            )));
        }
        let lr = self.lr_at(self.state.step);
        self.state.step += 1;
        let t = self.state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step_size = (lr / c1) as f32;
        let c2_sqrt = c2.sqrt() as f32;
        let eps = self.eps as f32;
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.state.m[i].data_mut();
            let v = self.state.v[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                *w -= step_size * m[j] / (v[j].sqrt() / c2_sqrt + eps);
            }
        }
        Ok(lr)
    }
}
