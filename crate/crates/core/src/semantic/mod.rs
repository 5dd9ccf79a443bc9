//! Generative semantic embeddings.
//!
//! Images are pre-clustered with K-means, a handful of representatives per
//! pre-cluster are described by a multimodal LLM, the descriptions are encoded
//! into class embeddings, and each image receives a text embedding that is a
//! similarity-weighted average of those class embeddings.

pub mod client;
mod descriptions;
mod kmeans;
mod representatives;
mod synthesis;

use serde::{Deserialize, Serialize};

pub use client::{
    ChatCompletionClient, ClientFailure, DescriptionClient, DescriptionRequest, EmbeddingClient,
    EndpointConfig, MockDescriptionClient, MockTextEncoder, TextEncoderClient,
};
pub use descriptions::{
    aggregate_per_cluster, build_prompt, encode_descriptions, follows_template, generate_descriptions,
    normalize_description, read_descriptions_jsonl, write_descriptions_jsonl, ClassDescription,
    ClientPolicy, DESCRIPTION_PROMPT,
};
pub use kmeans::{kmeans, kmeans_single, restart_seed, KMeansOptions, KMeansResult};
pub use representatives::{
    select_representatives, spaced_positions, ClusterRepresentatives, RepresentativeSelection,
};
pub use synthesis::{semantic_weights, synthesize_text_embeddings};

use crate::error::{GsecError, Result};
use crate::numerics::Matrix;

/// Images per pre-cluster worth of samples.
pub const SAMPLES_PER_PRECLUSTER: usize = 300;

/// Number of K-means pre-clusters: `max(ceil(n / 300), 3K)`, capped at `n`.
pub fn cluster_count(n: usize, expected_clusters: usize) -> usize {
    n.div_ceil(SAMPLES_PER_PRECLUSTER)
        .max(3 * expected_clusters)
        .min(n)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescriptionGranularity {
    /// One class embedding per representative image.
    #[default]
    PerRepresentative,
    /// Representative embeddings averaged within each pre-cluster.
    PerCluster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemanticConfig {
    pub expected_clusters: usize,
    pub temperature: f64,
    pub reps_per_cluster: usize,
    pub kmeans_iterations: usize,
    pub kmeans_restarts: usize,
    pub granularity: DescriptionGranularity,
    pub client_policy: ClientPolicy,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            expected_clusters: 10,
            temperature: 0.04,
            reps_per_cluster: 5,
            kmeans_iterations: 100,
            kmeans_restarts: 5,
            granularity: DescriptionGranularity::PerRepresentative,
            client_policy: ClientPolicy::default(),
        }
    }
}

impl SemanticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.expected_clusters < 2 {
            return Err(GsecError::Config("expected_clusters must be at least 2".into()));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(GsecError::Config("temperature must be positive".into()));
        }
        if self.reps_per_cluster == 0 || self.kmeans_restarts == 0 || self.kmeans_iterations == 0 {
            return Err(GsecError::Config(
                "reps_per_cluster, kmeans_iterations and kmeans_restarts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything produced while synthesizing text embeddings.
#[derive(Clone, Debug)]
pub struct SemanticOutput {
    pub preclusters: KMeansResult,
    pub representatives: RepresentativeSelection,
    pub descriptions: Vec<ClassDescription>,
    pub class_embeddings: Matrix,
    pub text_embeddings: Matrix,
}

/// Runs pre-clustering, representative selection, description, encoding and
/// synthesis. `ids[i]` is the stable id of image row `i`.
pub fn run_semantic(
    images: &Matrix,
    ids: &[u64],
    config: &SemanticConfig,
    describer: &dyn DescriptionClient,
    encoder: &dyn TextEncoderClient,
    image_ref: &(dyn Fn(u64) -> Option<String> + Sync),
    seed: u64,
) -> Result<SemanticOutput> {
    config.validate()?;
    if ids.len() != images.rows() {
        return Err(GsecError::Shape(format!(
            "{} ids for {} images",
            ids.len(),
            images.rows()
        )));
    }
    if images.rows() == 0 {
        return Err(GsecError::InvalidInput("no images".into()));
    }
    let c = cluster_count(images.rows(), config.expected_clusters);
    let options = KMeansOptions {
        max_iterations: config.kmeans_iterations,
        restarts: config.kmeans_restarts,
    };
    let preclusters = kmeans(images, c, options, seed)?;
    let representatives = select_representatives(&preclusters, images, config.reps_per_cluster);
    let reps: Vec<(u64, usize)> = representatives
        .flatten()
        .into_iter()
        .map(|(i, cluster)| (ids[i], cluster))
        .collect();
    let descriptions = generate_descriptions(&reps, describer, image_ref, config.client_policy)?;
    let encoded = encode_descriptions(&descriptions, encoder, config.client_policy)?;
    let class_embeddings = match config.granularity {
        DescriptionGranularity::PerRepresentative => encoded,
        DescriptionGranularity::PerCluster => aggregate_per_cluster(&descriptions, &encoded)?,
    };
    let text_embeddings = synthesize_text_embeddings(images, &class_embeddings, config.temperature)?;
    Ok(SemanticOutput {
        preclusters,
        representatives,
        descriptions,
        class_embeddings,
        text_embeddings,
    })
}
