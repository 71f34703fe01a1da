//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::{NumericsError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter tensor plus the
/// step counter.
#[derive(Clone, Debug)]
pub struct AdamWState {
    pub config: AdamWConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamWState {
    pub fn new<'a>(config: AdamWConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (first, second) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.rows(), p.cols()), Tensor::zeros(p.rows(), p.cols())))
            .unzip();
        Self {
            config,
            first,
            second,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of every parameter. Shapes and finiteness are checked
    /// before anything is modified, so a rejected step leaves the parameters
    /// and moments untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), NumericsError> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(NumericsError::Length {
                expected: self.first.len(),
                actual: params.len().min(grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "adamw_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(NumericsError::NonFiniteGradient { index: i });
            }
        }

        self.step += 1;
        let AdamWConfig {
            learning_rate: lr,
            weight_decay: wd,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((theta, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps) - lr * wd * *theta;
            }
        }
        Ok(())
    }
}
