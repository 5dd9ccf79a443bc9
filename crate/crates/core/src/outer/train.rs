use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GsecError, Result};
use crate::inner::{derive_seed, plateaued};
use crate::numerics::{AdamHyper, Matrix, OptimizerState};
use crate::outer::encoder::{EncoderCache, TaskEncoder};
use crate::outer::loss::{outer_loss_with_grad, AlignOrder, OuterLossParts};

const CHUNK_ROWS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuterTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Width of the tanh hidden layer; 0 means a single affine layer.
    pub hidden_width: usize,
    pub patience: usize,
    pub min_improvement: f64,
    pub align_order: AlignOrder,
}

impl Default for OuterTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 1024,
            learning_rate: 1e-3,
            seed: 0,
            hidden_width: 0,
            patience: 10,
            min_improvement: 1e-5,
            align_order: AlignOrder::InnerTarget,
        }
    }
}

impl OuterTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(GsecError::Config("epochs, batch_size and patience must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(GsecError::Config("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Outer loss of the encoder on `inputs` (rows of `[v; t]`) against the inner
/// prediction, with the gradient for every encoder parameter.
pub fn outer_loss_and_grad(
    encoder: &TaskEncoder,
    inputs: &Matrix,
    inner: &Matrix,
    order: AlignOrder,
) -> Result<(OuterLossParts, TaskEncoder)> {
    if inputs.cols() != encoder.input_dim() {
        return Err(GsecError::Shape(format!(
            "encoder expects {} inputs, got {}",
            encoder.input_dim(),
            inputs.cols()
        )));
    }
    let caches: Vec<EncoderCache> = (0..inputs.rows())
        .into_par_iter()
        .map(|i| encoder.forward_cached(inputs.row(i)))
        .collect();
    let mut y = Matrix::zeros(inputs.rows(), encoder.clusters());
    for (i, c) in caches.iter().enumerate() {
        y.row_mut(i).copy_from_slice(&c.probs);
    }
    let (parts, grad_y) = outer_loss_with_grad(&y, inner, order)?;
    let partials: Vec<TaskEncoder> = (0..inputs.rows().div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|chunk| {
            let mut g = encoder.zeros_like();
            let end = ((chunk + 1) * CHUNK_ROWS).min(inputs.rows());
            for i in chunk * CHUNK_ROWS..end {
                encoder.backward_into(inputs.row(i), &caches[i], grad_y.row(i), &mut g);
            }
            g
        })
        .collect();
    let mut grads = encoder.zeros_like();
    for p in &partials {
        grads.add_assign(p);
    }
    Ok((parts, grads))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterEpochRecord {
    pub epoch: usize,
    pub loss: OuterLossParts,
}

#[derive(Clone, Debug)]
pub struct OuterTrainOutput {
    pub encoder: TaskEncoder,
    /// Epoch 0 is the untrained encoder.
    pub history: Vec<OuterEpochRecord>,
    pub stopped_early: bool,
}

/// Trains a fresh task encoder to match the frozen inner prediction `inner`.
pub fn train_outer(images: &Matrix, texts: &Matrix, inner: &Matrix, config: &OuterTrainConfig) -> Result<OuterTrainOutput> {
    config.validate()?;
    let inputs = images.hconcat(texts)?;
    if inner.rows() != inputs.rows() {
        return Err(GsecError::Shape(format!(
            "{} inner predictions for {} samples",
            inner.rows(),
            inputs.rows()
        )));
    }
    let encoder = TaskEncoder::init(inputs.cols(), inner.cols(), config.hidden_width, derive_seed(config.seed, 11))?;
    train_outer_from(encoder, &inputs, inner, config)
}

/// Trains `encoder` starting from its current parameters.
pub fn train_outer_from(
    mut encoder: TaskEncoder,
    inputs: &Matrix,
    inner: &Matrix,
    config: &OuterTrainConfig,
) -> Result<OuterTrainOutput> {
    config.validate()?;
    let n = inputs.rows();
    let group_lens: Vec<usize> = encoder.groups().iter().map(|g| g.len()).collect();
    let mut optimizer = OptimizerState::new(AdamHyper::with_learning_rate(config.learning_rate), &group_lens);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 12));
    let order = config.align_order;

    let initial = outer_loss_and_grad(&encoder, inputs, inner, order)?.0;
    let mut history = vec![OuterEpochRecord { epoch: 0, loss: initial }];
    let mut indices: Vec<usize> = (0..n).collect();
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        indices.shuffle(&mut rng);
        for (batch_no, batch) in indices.chunks(config.batch_size).enumerate() {
            let (parts, grads) =
                outer_loss_and_grad(&encoder, &inputs.select_rows(batch), &inner.select_rows(batch), order)?;
            if !parts.is_finite() {
                return Err(GsecError::NumericalAbort {
                    epoch,
                    batch: batch_no,
                    parts: parts.to_string(),
                });
            }
            let grad_groups = grads.groups();
            let mut params = encoder.groups_mut();
            optimizer.step(&mut params, &grad_groups)?;
        }
        let loss = outer_loss_and_grad(&encoder, inputs, inner, order)?.0;
        if !loss.is_finite() {
            return Err(GsecError::NumericalAbort {
                epoch,
                batch: usize::MAX,
                parts: loss.to_string(),
            });
        }
        history.push(OuterEpochRecord { epoch, loss });
        if plateaued(history.iter().map(|r| r.loss.total), config.patience, config.min_improvement) {
            stopped_early = epoch < config.epochs;
            break;
        }
    }
    Ok(OuterTrainOutput {
        encoder,
        history,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::numerics::check_gradient;

    fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    fn random_targets(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let mut m = Matrix::zeros(n, k);
        for i in 0..n {
            let row = m.row_mut(i);
            row.iter_mut().for_each(|v| *v = rng.random_range(0.05..1.0));
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        m
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for hidden in [0, 5] {
            let inputs = random_matrix(10, 6, &mut rng);
            let targets = random_targets(10, 3, &mut rng);
            let mut enc = TaskEncoder::init(6, 3, hidden, 4).unwrap();
            let params = enc.flat_params();
            let report = check_gradient(
                |p| {
                    enc.set_flat_params(p)?;
                    let (parts, g) = outer_loss_and_grad(&enc, &inputs, &targets, AlignOrder::InnerTarget)?;
                    Ok((parts.total, g.flat_params()))
                },
                &params,
                1e-5,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "hidden={hidden}: {}", report.max_relative_error);
        }
    }

    #[test]
    fn zero_learning_rate_leaves_encoder() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_matrix(40, 3, &mut rng);
        let t = random_matrix(40, 3, &mut rng);
        let y = random_targets(40, 2, &mut rng);
        let config = OuterTrainConfig {
            epochs: 3,
            batch_size: 16,
            learning_rate: 0.0,
            patience: 50,
            ..Default::default()
        };
        let out = train_outer(&v, &t, &y, &config).unwrap();
        let fresh = TaskEncoder::init(6, 2, 0, derive_seed(0, 11)).unwrap();
        assert_eq!(out.encoder, fresh);
    }

    #[test]
    fn separable_one_hot_targets_are_fitted() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 120;
        let mut v = random_matrix(n, 2, &mut rng);
        let t = random_matrix(n, 1, &mut rng);
        let mut y = Matrix::zeros(n, 2);
        for i in 0..n {
            let class = i % 2;
            v.row_mut(i)[0] += if class == 0 { -6.0 } else { 6.0 };
            y.row_mut(i)[class] = 1.0;
        }
        let config = OuterTrainConfig {
            epochs: 300,
            batch_size: 32,
            learning_rate: 0.05,
            patience: 300,
            ..Default::default()
        };
        let out = train_outer(&v, &t, &y, &config).unwrap();
        let last = out.history.last().unwrap().loss;
        assert!(last.align < 0.05 * n as f64, "{last}");
        assert!(last.total < out.history[0].loss.total);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_matrix(70, 3, &mut rng);
        let t = random_matrix(70, 3, &mut rng);
        let y = random_targets(70, 3, &mut rng);
        let config = OuterTrainConfig {
            epochs: 4,
            batch_size: 20,
            hidden_width: 4,
            ..Default::default()
        };
        let a = train_outer(&v, &t, &y, &config).unwrap();
        let b = train_outer(&v, &t, &y, &config).unwrap();
        assert_eq!(a.encoder, b.encoder);
        assert_eq!(a.history, b.history);
    }
}
