use serde::{Deserialize, Serialize};

use crate::error::{GsecError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adaptive-moment optimizer state over a fixed list of parameter groups.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub hyper: AdamHyper,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// One moment buffer per group, sized by `group_lens`.
    pub fn new(hyper: AdamHyper, group_lens: &[usize]) -> Self {
        Self {
            hyper,
            step: 0,
            first: group_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second: group_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update to every group.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(GsecError::Shape(format!(
                "optimizer tracks {} groups, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (g, (p, gr)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[g].len() || gr.len() != p.len() {
                return Err(GsecError::Shape(format!(
                    "group {g}: state {}, params {}, grads {}",
                    self.first[g].len(),
                    p.len(),
                    gr.len()
                )));
            }
        }

        self.step += 1;
        let AdamHyper {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for (g, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[g], &mut self.second[g]);
            for i in 0..param.len() {
                let gi = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
