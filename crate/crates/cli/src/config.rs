use std::path::{Path, PathBuf};

use gsec_core::evaluation::BVConfigurationId;
use gsec_core::inner::InnerTrainConfig;
use gsec_core::outer::OuterTrainConfig;
use gsec_core::pipeline::TrainSettings;
use gsec_core::semantic::{EndpointConfig, SemanticConfig};
use gsec_core::{GsecError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub images: Option<PathBuf>,
    /// Generative (synthesized) text embeddings.
    pub texts: Option<PathBuf>,
    /// Precomputed matching-based text embeddings.
    pub matching_texts: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Hard predictions to score in `eval`.
    pub predictions: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub samples: usize,
    pub dim: usize,
    pub clusters: usize,
    pub separation: f64,
    pub modality_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            samples: 1500,
            dim: 16,
            clusters: 3,
            separation: 10.0,
            modality_noise: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientsConfig {
    /// Deterministic offline clients; live endpoints need `mock = false`.
    pub mock: bool,
    pub describer: Option<EndpointConfig>,
    pub encoder: Option<EndpointConfig>,
    /// Mock encoder output size; defaults to the image dimension.
    pub mock_encoder_dim: Option<usize>,
    /// Image URL per sample for the description request, with `{id}` replaced
    /// by the sample id. Without it requests carry only the prompt.
    pub image_url_template: Option<String>,
}

impl Default for ClientsConfig {
    fn default() -> Self {
        Self {
            mock: true,
            describer: None,
            encoder: None,
            mock_encoder_dim: None,
            image_url_template: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub configurations: Vec<BVConfigurationId>,
    pub run_count: usize,
    pub seeds: Vec<u64>,
    /// Also report the probability-vector variance.
    pub soft: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            configurations: BVConfigurationId::ALL.to_vec(),
            run_count: 10,
            seeds: vec![0],
            soft: false,
        }
    }
}

/// Everything a command needs. The global `seed` drives every stage; seeds
/// inside `inner` and `outer` are replaced by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub clusters: usize,
    pub output_dir: PathBuf,
    /// Configuration trained by `train`.
    pub configuration: BVConfigurationId,
    pub data: DataPaths,
    pub synth: SynthConfig,
    pub semantic: SemanticConfig,
    pub inner: InnerTrainConfig,
    pub outer: OuterTrainConfig,
    pub clients: ClientsConfig,
    pub experiment: ExperimentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            clusters: 3,
            output_dir: PathBuf::from("gsec-out"),
            configuration: BVConfigurationId::Gsec,
            data: DataPaths::default(),
            synth: SynthConfig::default(),
            semantic: SemanticConfig::default(),
            inner: InnerTrainConfig::default(),
            outer: OuterTrainConfig::default(),
            clients: ClientsConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GsecError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| GsecError::Config(format!("{}: {e}", path.display())))
    }

    /// Pins stage seeds and the cluster count to the global values.
    pub fn normalize(&mut self) {
        self.inner.seed = self.seed;
        self.outer.seed = self.seed;
        self.semantic.expected_clusters = self.clusters;
        self.synth.clusters = self.clusters;
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            clusters: self.clusters,
            inner: self.inner.clone(),
            outer: self.outer.clone(),
        }
        .with_seed(self.seed)
    }

    /// Canonical bytes hashed into manifests. The output directory is left
    /// out so the same experiment hashes the same wherever it is written.
    pub fn canonical_json(&self) -> Vec<u8> {
        let mut copy = self.clone();
        copy.output_dir = PathBuf::new();
        serde_json::to_vec(&copy).expect("config serializes")
    }
}

/// Returns the path or a config error naming the missing input.
pub fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let path = path
        .as_deref()
        .ok_or_else(|| GsecError::Config(format!("{what} file is required but was not given")))?;
    if !path.exists() {
        return Err(GsecError::Config(format!("{what} file {} does not exist", path.display())));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.experiment.run_count, 10);
        assert!(c.clients.mock);
    }

    #[test]
    fn nested_values_parse() {
        let c: PipelineConfig = toml::from_str(
            r#"
            seed = 4
            clusters = 5
            configuration = "image+ensemble"
            [inner]
            epochs = 7
            confidence_form = "sum-of-logs"
            [experiment]
            configurations = ["image", "gsec"]
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.inner.epochs, 7);
        assert_eq!(c.configuration, BVConfigurationId::ImageEnsemble);
        assert_eq!(c.experiment.configurations, vec![BVConfigurationId::Image, BVConfigurationId::Gsec]);
    }

    #[test]
    fn unknown_keys_and_configurations_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("sed = 1").is_err());
        assert!(toml::from_str::<PipelineConfig>("configuration = \"image+text\"").is_err());
    }
}
