//! Inner then outer training on one set of image and text embeddings.

use serde::{Deserialize, Serialize};

use crate::data_io::{build_neighbor_index, Modality};
use crate::error::{GsecError, Result};
use crate::inner::{inner_average, train_inner_with_indices, InnerTrainConfig, InnerTrainOutput, ModulatorMode};
use crate::numerics::Matrix;
use crate::outer::{final_assignments, train_outer, OuterTrainConfig, OuterTrainOutput};

/// Shape of the inner branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// One member with frozen unit modulators: a plain affine head per branch.
    Linear,
    /// BatchEnsemble branches with the configured member count.
    Ensemble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub clusters: usize,
    pub inner: InnerTrainConfig,
    pub outer: OuterTrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            clusters: 10,
            inner: InnerTrainConfig::default(),
            outer: OuterTrainConfig::default(),
        }
    }
}

impl TrainSettings {
    /// Copy with both stage seeds replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.inner.seed = seed;
        out.outer.seed = seed;
        out
    }

    /// Copy whose inner stage follows `architecture`.
    pub fn with_architecture(&self, architecture: Architecture) -> Self {
        let mut out = self.clone();
        if architecture == Architecture::Linear {
            out.inner.ensemble_size = 1;
            out.inner.modulators = ModulatorMode::FrozenUnit;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainedPipeline {
    pub inner: InnerTrainOutput,
    pub outer: OuterTrainOutput,
}

impl TrainedPipeline {
    /// Averaged inner-branch prediction on clean inputs.
    pub fn inner_prediction(&self, images: &Matrix, texts: &Matrix) -> Result<Matrix> {
        let (yv, yt) = self.inner.model.assign(images, texts)?;
        inner_average(&yv, &yt)
    }

    pub fn probabilities(&self, images: &Matrix, texts: &Matrix) -> Result<Matrix> {
        self.outer.encoder.forward_matrix(&images.hconcat(texts)?)
    }

    pub fn predict(&self, images: &Matrix, texts: &Matrix) -> Result<Vec<u32>> {
        final_assignments(&self.outer.encoder, images, texts)
    }
}

/// Trains the inner branches, freezes them, and trains the task encoder on
/// their averaged prediction.
pub fn train_pipeline(images: &Matrix, texts: &Matrix, settings: &TrainSettings) -> Result<TrainedPipeline> {
    if images.rows() != texts.rows() {
        return Err(GsecError::Shape(format!(
            "{} image rows but {} text rows",
            images.rows(),
            texts.rows()
        )));
    }
    let k = settings.inner.neighbor_k.min(images.rows().saturating_sub(1)).max(1);
    let image_index = build_neighbor_index(images, k, Modality::Image)?;
    let text_index = build_neighbor_index(texts, k, Modality::Text)?;
    let inner = train_inner_with_indices(images, texts, &image_index, &text_index, settings.clusters, &settings.inner)?;
    let (yv, yt) = inner.model.assign(images, texts)?;
    let target = inner_average(&yv, &yt)?;
    let outer = train_outer(images, texts, &target, &settings.outer)?;
    Ok(TrainedPipeline { inner, outer })
}
