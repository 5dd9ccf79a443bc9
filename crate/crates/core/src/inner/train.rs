use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::{build_neighbor_index, Dataset, Modality, NeighborIndex};
use crate::error::{GsecError, Result};
use crate::inner::layer::{BatchEnsembleLayer, LayerGrads, SampleCache};
use crate::inner::loss::{inner_loss_with_grad, ConfidenceForm, InnerLossParts};
use crate::numerics::{AdamHyper, Matrix, OptimizerState};

/// Rows per parallel work unit; fixed so gradient sums do not depend on the
/// thread count.
const CHUNK_ROWS: usize = 64;

/// Derives a sub-seed for a named stream of a run.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborResampling {
    /// Fresh neighbor draw for every sample at every optimizer step.
    #[default]
    PerStep,
    /// One draw per sample per epoch.
    PerEpoch,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModulatorMode {
    /// Random ±1 initialization, trained with the rest.
    #[default]
    RandomSign,
    /// All-ones modulators that are never updated (plain affine members).
    FrozenUnit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub ensemble_size: usize,
    pub neighbor_k: usize,
    pub seed: u64,
    /// Stop when the loss improved by less than `min_improvement` over this
    /// many epochs.
    pub patience: usize,
    pub min_improvement: f64,
    pub confidence_form: ConfidenceForm,
    pub neighbor_resampling: NeighborResampling,
    pub modulators: ModulatorMode,
}

impl Default for InnerTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 1024,
            learning_rate: 1e-3,
            ensemble_size: 24,
            neighbor_k: 10,
            seed: 0,
            patience: 10,
            min_improvement: 1e-5,
            confidence_form: ConfidenceForm::LogOfSum,
            neighbor_resampling: NeighborResampling::PerStep,
            modulators: ModulatorMode::RandomSign,
        }
    }
}

impl InnerTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.ensemble_size == 0 || self.neighbor_k == 0 {
            return Err(GsecError::Config(
                "epochs, batch_size, ensemble_size and neighbor_k must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(GsecError::Config("learning_rate must be finite and >= 0".into()));
        }
        if self.patience == 0 {
            return Err(GsecError::Config("patience must be positive".into()));
        }
        Ok(())
    }
}

/// Image and text BatchEnsemble branches sharing ensemble size and cluster
/// count.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerModel {
    pub image: BatchEnsembleLayer,
    pub text: BatchEnsembleLayer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerGrads {
    pub image: LayerGrads,
    pub text: LayerGrads,
}

impl InnerGrads {
    pub fn flatten(&self) -> Vec<f64> {
        self.image
            .groups()
            .into_iter()
            .chain(self.text.groups())
            .flat_map(|g| g.iter().copied())
            .collect()
    }
}

impl InnerModel {
    pub fn new(image: BatchEnsembleLayer, text: BatchEnsembleLayer) -> Result<Self> {
        image.validate()?;
        text.validate()?;
        if image.members() != text.members() || image.output_dim() != text.output_dim() {
            return Err(GsecError::Shape(format!(
                "branches disagree: image m={} K={}, text m={} K={}",
                image.members(),
                image.output_dim(),
                text.members(),
                text.output_dim()
            )));
        }
        Ok(Self { image, text })
    }

    pub fn init(image_dim: usize, text_dim: usize, clusters: usize, config: &InnerTrainConfig) -> Result<Self> {
        let m = config.ensemble_size;
        let mut image = BatchEnsembleLayer::init(image_dim, clusters, m, derive_seed(config.seed, 1))?;
        let mut text = BatchEnsembleLayer::init(text_dim, clusters, m, derive_seed(config.seed, 2))?;
        if config.modulators == ModulatorMode::FrozenUnit {
            image.set_unit_modulators();
            text.set_unit_modulators();
        }
        Self::new(image, text)
    }

    pub fn clusters(&self) -> usize {
        self.image.output_dim()
    }

    pub fn members(&self) -> usize {
        self.image.members()
    }

    /// Assignments of every image row and every text row.
    pub fn assign(&self, images: &Matrix, texts: &Matrix) -> Result<(Matrix, Matrix)> {
        Ok((self.image.assign_matrix(images)?, self.text.assign_matrix(texts)?))
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.image
            .groups()
            .into_iter()
            .chain(self.text.groups())
            .flat_map(|g| g.iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.image.parameter_count() + self.text.parameter_count();
        if values.len() != expected {
            return Err(GsecError::Shape(format!(
                "{} values for {expected} parameters",
                values.len()
            )));
        }
        let mut offset = 0;
        for group in self.image.groups_mut().into_iter().chain(self.text.groups_mut()) {
            let len = group.len();
            group.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    fn group_lens(&self) -> Vec<usize> {
        self.image
            .groups()
            .into_iter()
            .chain(self.text.groups())
            .map(<[f64]>::len)
            .collect()
    }
}

/// Rows for one optimizer step: each sample's image and text embedding and the
/// embeddings of its sampled neighbors.
#[derive(Clone, Debug)]
pub struct InnerStepInput {
    pub images: Matrix,
    pub texts: Matrix,
    pub image_neighbors: Matrix,
    pub text_neighbors: Matrix,
}

impl InnerStepInput {
    pub fn gather(
        images: &Matrix,
        texts: &Matrix,
        batch: &[usize],
        image_neighbors: &[usize],
        text_neighbors: &[usize],
    ) -> Self {
        Self {
            images: images.select_rows(batch),
            texts: texts.select_rows(batch),
            image_neighbors: images.select_rows(image_neighbors),
            text_neighbors: texts.select_rows(text_neighbors),
        }
    }
}

fn forward_batch(layer: &BatchEnsembleLayer, inputs: &Matrix) -> (Matrix, Vec<SampleCache>) {
    let k = layer.output_dim();
    let per_row: Vec<(Vec<f64>, SampleCache)> = (0..inputs.rows())
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; k];
            let cache = layer.forward_cached(inputs.row(i), &mut out);
            (out, cache)
        })
        .collect();
    let mut assign = Matrix::zeros(inputs.rows(), k);
    let mut caches = Vec::with_capacity(per_row.len());
    for (i, (row, cache)) in per_row.into_iter().enumerate() {
        assign.row_mut(i).copy_from_slice(&row);
        caches.push(cache);
    }
    (assign, caches)
}

fn backward_batch(layer: &BatchEnsembleLayer, inputs: &Matrix, caches: &[SampleCache], grad: &Matrix) -> LayerGrads {
    let partials: Vec<LayerGrads> = (0..inputs.rows().div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|chunk| {
            let mut g = LayerGrads::zeros_like(layer);
            let end = ((chunk + 1) * CHUNK_ROWS).min(inputs.rows());
            for i in chunk * CHUNK_ROWS..end {
                layer.backward_into(inputs.row(i), &caches[i], grad.row(i), &mut g);
            }
            g
        })
        .collect();
    let mut total = LayerGrads::zeros_like(layer);
    for p in &partials {
        total.add_assign(p);
    }
    total
}

/// Inner objective on one batch and its gradient with respect to every
/// parameter of both branches.
pub fn inner_loss_and_grad(
    model: &InnerModel,
    input: &InnerStepInput,
    form: ConfidenceForm,
) -> Result<(InnerLossParts, InnerGrads)> {
    let yvn = model.image.assign_matrix(&input.image_neighbors)?;
    let ytn = model.text.assign_matrix(&input.text_neighbors)?;
    loss_and_grad_with_targets(model, &input.images, &input.texts, &yvn, &ytn, form)
}

/// Same as [`inner_loss_and_grad`] with the neighbor assignments supplied.
/// They are treated as constants, which is what the gradient describes.
pub fn loss_and_grad_with_targets(
    model: &InnerModel,
    images: &Matrix,
    texts: &Matrix,
    image_neighbor_assign: &Matrix,
    text_neighbor_assign: &Matrix,
    form: ConfidenceForm,
) -> Result<(InnerLossParts, InnerGrads)> {
    let (yv, image_cache) = forward_batch(&model.image, images);
    let (yt, text_cache) = forward_batch(&model.text, texts);
    let (parts, grad_v, grad_t) =
        inner_loss_with_grad(&yv, &yt, image_neighbor_assign, text_neighbor_assign, form)?;
    let grads = InnerGrads {
        image: backward_batch(&model.image, images, &image_cache, &grad_v),
        text: backward_batch(&model.text, texts, &text_cache, &grad_t),
    };
    Ok((parts, grads))
}

/// Owns a model and its optimizer state and applies single updates.
#[derive(Clone, Debug)]
pub struct InnerTrainer {
    pub model: InnerModel,
    optimizer: OptimizerState,
    form: ConfidenceForm,
    frozen_modulators: bool,
}

impl InnerTrainer {
    pub fn new(model: InnerModel, config: &InnerTrainConfig) -> Self {
        let optimizer = OptimizerState::new(AdamHyper::with_learning_rate(config.learning_rate), &model.group_lens());
        Self {
            model,
            optimizer,
            form: config.confidence_form,
            frozen_modulators: config.modulators == ModulatorMode::FrozenUnit,
        }
    }

    /// One optimizer update on `input`; returns the loss before the update.
    pub fn step(&mut self, input: &InnerStepInput) -> Result<InnerLossParts> {
        let (parts, mut grads) = inner_loss_and_grad(&self.model, input, self.form)?;
        if !parts.is_finite() {
            return Ok(parts);
        }
        if self.frozen_modulators {
            for g in [&mut grads.image, &mut grads.text] {
                g.input_mod.as_mut_slice().fill(0.0);
                g.output_mod.as_mut_slice().fill(0.0);
            }
        }
        let grad_groups: Vec<&[f64]> = grads.image.groups().into_iter().chain(grads.text.groups()).collect();
        let InnerModel { image, text } = &mut self.model;
        let mut params: Vec<&mut [f64]> = image.groups_mut().into_iter().chain(text.groups_mut()).collect();
        self.optimizer.step(&mut params, &grad_groups)?;
        Ok(parts)
    }
}

/// Neighbor assignments `(y^{v,N}, y^{t,N})`: one random neighbor per sample
/// and modality, passed through the matching branch.
pub fn neighbor_assign<R: Rng + ?Sized>(
    model: &InnerModel,
    images: &Matrix,
    texts: &Matrix,
    image_index: &NeighborIndex,
    text_index: &NeighborIndex,
    rng: &mut R,
) -> Result<(Matrix, Matrix)> {
    let n = images.rows();
    if image_index.len() != n || text_index.len() != n || texts.rows() != n {
        return Err(GsecError::Shape("neighbor indices must cover every sample".into()));
    }
    let (vn, tn) = draw_neighbors(0..n, image_index, text_index, rng);
    Ok((
        model.image.assign_matrix(&images.select_rows(&vn))?,
        model.text.assign_matrix(&texts.select_rows(&tn))?,
    ))
}

fn draw_neighbors<R: Rng + ?Sized>(
    samples: impl Iterator<Item = usize>,
    image_index: &NeighborIndex,
    text_index: &NeighborIndex,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    samples
        .map(|i| (image_index.sample_neighbor(i, rng), text_index.sample_neighbor(i, rng)))
        .unzip()
}

/// Mean assignment over each sample's whole neighbor list.
fn expected_neighbor_assign(assign: &Matrix, index: &NeighborIndex) -> Matrix {
    let mut out = Matrix::zeros(assign.rows(), assign.cols());
    let inv = 1.0 / index.k() as f64;
    for i in 0..assign.rows() {
        let row = out.row_mut(i);
        for &j in index.neighbors_of(i) {
            for (o, v) in row.iter_mut().zip(assign.row(j)) {
                *o += v * inv;
            }
        }
    }
    out
}

/// Full-dataset inner objective used for reporting. Neighbor targets are the
/// expected assignment over each sample's neighbor list, so the value is
/// deterministic for fixed parameters.
pub fn evaluate_inner(
    model: &InnerModel,
    images: &Matrix,
    texts: &Matrix,
    image_index: &NeighborIndex,
    text_index: &NeighborIndex,
    form: ConfidenceForm,
) -> Result<InnerLossParts> {
    let (yv, yt) = model.assign(images, texts)?;
    let yvn = expected_neighbor_assign(&yv, image_index);
    let ytn = expected_neighbor_assign(&yt, text_index);
    Ok(inner_loss_with_grad(&yv, &yt, &yvn, &ytn, form)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerEpochRecord {
    pub epoch: usize,
    pub loss: InnerLossParts,
}

#[derive(Clone, Debug)]
pub struct InnerTrainOutput {
    pub model: InnerModel,
    /// Epoch 0 is the untrained model.
    pub history: Vec<InnerEpochRecord>,
    pub stopped_early: bool,
}

/// Trains both branches on a dataset that carries text embeddings, building
/// cosine k-NN indices per modality first.
pub fn train_inner(dataset: &Dataset, clusters: usize, config: &InnerTrainConfig) -> Result<InnerTrainOutput> {
    let texts = dataset
        .texts()
        .ok_or_else(|| GsecError::Config("inner training needs text embeddings".into()))?;
    let image_index = build_neighbor_index(dataset.images(), config.neighbor_k, Modality::Image)?;
    let text_index = build_neighbor_index(texts, config.neighbor_k, Modality::Text)?;
    train_inner_with_indices(dataset.images(), texts, &image_index, &text_index, clusters, config)
}

pub fn train_inner_with_indices(
    images: &Matrix,
    texts: &Matrix,
    image_index: &NeighborIndex,
    text_index: &NeighborIndex,
    clusters: usize,
    config: &InnerTrainConfig,
) -> Result<InnerTrainOutput> {
    config.validate()?;
    let n = images.rows();
    if texts.rows() != n || image_index.len() != n || text_index.len() != n {
        return Err(GsecError::Shape(
            "images, texts and neighbor indices must have the same number of samples".into(),
        ));
    }
    if clusters < 2 {
        return Err(GsecError::Config("need at least two clusters".into()));
    }
    let model = InnerModel::init(images.cols(), texts.cols(), clusters, config)?;
    let mut trainer = InnerTrainer::new(model, config);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 3));
    let form = config.confidence_form;

    let initial = evaluate_inner(&trainer.model, images, texts, image_index, text_index, form)?;
    let mut history = vec![InnerEpochRecord { epoch: 0, loss: initial }];
    let mut order: Vec<usize> = (0..n).collect();
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let epoch_draw = match config.neighbor_resampling {
            NeighborResampling::PerEpoch => Some(draw_neighbors(0..n, image_index, text_index, &mut rng)),
            NeighborResampling::PerStep => None,
        };
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let (vn, tn) = match &epoch_draw {
                Some((v, t)) => (batch.iter().map(|&i| v[i]).collect(), batch.iter().map(|&i| t[i]).collect()),
                None => draw_neighbors(batch.iter().copied(), image_index, text_index, &mut rng),
            };
            let input = InnerStepInput::gather(images, texts, batch, &vn, &tn);
            let parts = trainer.step(&input)?;
            if !parts.is_finite() {
                return Err(GsecError::NumericalAbort {
                    epoch,
                    batch: batch_no,
                    parts: parts.to_string(),
                });
            }
        }
        let loss = evaluate_inner(&trainer.model, images, texts, image_index, text_index, form)?;
        if !loss.is_finite() {
            return Err(GsecError::NumericalAbort {
                epoch,
                batch: usize::MAX,
                parts: loss.to_string(),
            });
        }
        history.push(InnerEpochRecord { epoch, loss });
        if plateaued(history.iter().map(|r| r.loss.total), config.patience, config.min_improvement) {
            stopped_early = epoch < config.epochs;
            break;
        }
    }

    Ok(InnerTrainOutput {
        model: trainer.model,
        history,
        stopped_early,
    })
}

/// True when the last value improved on the value `window` entries earlier by
/// less than `min_improvement`.
pub(crate) fn plateaued(values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator, window: usize, min_improvement: f64) -> bool {
    let values: Vec<f64> = values.collect();
    if values.len() <= window {
        return false;
    }
    let last = values[values.len() - 1];
    let earlier = values[values.len() - 1 - window];
    earlier - last < min_improvement
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{generate_synthetic, SyntheticSpec};
    use crate::numerics::check_gradient;

    fn tiny_input(n: usize, d: usize, seed: u64) -> InnerStepInput {
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = || Matrix::from_vec(n, d, (0..n * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        InnerStepInput {
            images: m(),
            texts: m(),
            image_neighbors: m(),
            text_neighbors: m(),
        }
    }

    fn randomized_model(d: usize, k: usize, m: usize, seed: u64) -> InnerModel {
        use rand_distr::StandardNormal;
        let config = InnerTrainConfig { ensemble_size: m, seed, ..Default::default() };
        let mut model = InnerModel::init(d, d, k, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 99);
        let values: Vec<f64> = model.flat_params().iter().map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        model.set_flat_params(&values).unwrap();
        model
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for form in [ConfidenceForm::LogOfSum, ConfidenceForm::SumOfLogs] {
            let input = tiny_input(12, 4, 1);
            let mut model = randomized_model(4, 3, 2, 2);
            let params = model.flat_params();
            let yvn = model.image.assign_matrix(&input.image_neighbors).unwrap();
            let ytn = model.text.assign_matrix(&input.text_neighbors).unwrap();
            let report = check_gradient(
                |p| {
                    model.set_flat_params(p)?;
                    let (parts, grads) =
                        loss_and_grad_with_targets(&model, &input.images, &input.texts, &yvn, &ytn, form)?;
                    Ok((parts.total, grads.flatten()))
                },
                &params,
                1e-5,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{form:?}: {}", report.max_relative_error);
        }
    }

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let ds = generate_synthetic(&SyntheticSpec {
            samples: 60,
            dim: 4,
            clusters: 3,
            separation: 5.0,
            modality_noise: 0.2,
            seed: 1,
        })
        .unwrap();
        let config = InnerTrainConfig {
            epochs: 4,
            batch_size: 16,
            learning_rate: 0.0,
            ensemble_size: 3,
            neighbor_k: 3,
            patience: 100,
            ..Default::default()
        };
        let out = train_inner(&ds, 3, &config).unwrap();
        let init = InnerModel::init(4, 4, 3, &config).unwrap();
        assert_eq!(out.model, init);
        let first = out.history[0].loss;
        assert!(out.history.iter().all(|r| r.loss == first));
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = generate_synthetic(&SyntheticSpec {
            samples: 90,
            dim: 4,
            clusters: 3,
            separation: 5.0,
            modality_noise: 0.2,
            seed: 4,
        })
        .unwrap();
        let config = InnerTrainConfig {
            epochs: 5,
            batch_size: 32,
            ensemble_size: 4,
            neighbor_k: 3,
            ..Default::default()
        };
        let a = train_inner(&ds, 3, &config).unwrap();
        let b = train_inner(&ds, 3, &config).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        let per_epoch = InnerTrainConfig { neighbor_resampling: NeighborResampling::PerEpoch, ..config };
        assert_eq!(train_inner(&ds, 3, &per_epoch).unwrap().model, train_inner(&ds, 3, &per_epoch).unwrap().model);
    }

    #[test]
    fn neighbor_assign_with_self_neighbors_reproduces_assignments() {
        let input = tiny_input(5, 3, 8);
        let model = randomized_model(3, 2, 3, 1);
        let self_lists: Vec<Vec<usize>> = (0..5).map(|i| vec![i]).collect();
        let idx_v = NeighborIndex::from_lists(Modality::Image, &self_lists).unwrap();
        let idx_t = NeighborIndex::from_lists(Modality::Text, &self_lists).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (yvn, ytn) = neighbor_assign(&model, &input.images, &input.texts, &idx_v, &idx_t, &mut rng).unwrap();
        let (yv, yt) = model.assign(&input.images, &input.texts).unwrap();
        assert_eq!(yvn, yv);
        assert_eq!(ytn, yt);
    }

    #[test]
    fn neighbor_assign_is_seed_deterministic() {
        let input = tiny_input(6, 3, 9);
        let model = randomized_model(3, 2, 2, 4);
        let lists: Vec<Vec<usize>> = (0..6).map(|i| vec![(i + 1) % 6, (i + 2) % 6]).collect();
        let idx = NeighborIndex::from_lists(Modality::Image, &lists).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            neighbor_assign(&model, &input.images, &input.texts, &idx, &idx, &mut rng).unwrap()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn full_batch_loss_ignores_sample_order() {
        let input = tiny_input(10, 3, 3);
        let model = randomized_model(3, 3, 2, 6);
        let perm = [3, 7, 0, 9, 1, 5, 2, 8, 4, 6];
        let permuted = InnerStepInput {
            images: input.images.select_rows(&perm),
            texts: input.texts.select_rows(&perm),
            image_neighbors: input.image_neighbors.select_rows(&perm),
            text_neighbors: input.text_neighbors.select_rows(&perm),
        };
        let a = inner_loss_and_grad(&model, &input, ConfidenceForm::LogOfSum).unwrap().0;
        let b = inner_loss_and_grad(&model, &permuted, ConfidenceForm::LogOfSum).unwrap().0;
        assert!((a.total - b.total).abs() < 1e-12);
    }

    #[test]
    fn plateau_detection() {
        assert!(!plateaued([5.0, 4.0, 3.0].into_iter(), 2, 1e-5));
        assert!(plateaued([5.0, 4.0, 4.0, 4.0].into_iter(), 2, 1e-5));
        assert!(!plateaued([1.0].into_iter(), 10, 1e-5));
    }

    #[test]
    fn missing_texts_is_config_error() {
        let ds = Dataset::from_images(Matrix::identity(4));
        assert!(matches!(
            train_inner(&ds, 2, &InnerTrainConfig::default()),
            Err(GsecError::Config(_))
        ));
    }
}
