//! Pluggable description (multimodal LLM) and text-encoder clients.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::numerics::norm;

/// Failure reported by a client; the caller attaches the sample id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClientFailure {
    /// Connection, timeout or other failure worth retrying.
    Transport(String),
    /// The endpoint answered with something that cannot be used.
    Malformed(String),
}

impl std::fmt::Display for ClientFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClientFailure::Transport(m) => write!(f, "transport failure: {m}"),
            ClientFailure::Malformed(m) => write!(f, "malformed response: {m}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DescriptionRequest<'a> {
    pub sample_id: u64,
    pub prompt: &'a str,
    /// URL or data URI of the image, when the client needs one.
    pub image_ref: Option<String>,
}

/// Produces a free-text description of one image.
pub trait DescriptionClient: Sync {
    fn describe(&self, request: &DescriptionRequest<'_>) -> Result<String, ClientFailure>;
}

/// Maps a string to an embedding vector.
pub trait TextEncoderClient: Sync {
    fn encode(&self, text: &str) -> Result<Vec<f64>, ClientFailure>;
}

fn seeded_digest(seed: u64, payload: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(payload);
    hasher.finalize().into()
}

const MOCK_OBJECTS: &[&str] = &[
    "bird", "car", "cat", "deer", "dog", "frog", "horse", "ship", "truck", "airplane", "flower",
    "fish",
];
const MOCK_ATTRIBUTES: &[&str] = &[
    "bright colors", "a smooth surface", "fine texture", "a rounded shape", "sharp edges",
    "a dark background", "natural lighting", "a compact body", "long limbs", "a metallic sheen",
    "soft fur", "a striped pattern",
];

/// Deterministic stand-in for a multimodal LLM: returns a template sentence
/// whose object and attributes are picked by a seeded hash of the sample id.
#[derive(Clone, Debug)]
pub struct MockDescriptionClient {
    pub seed: u64,
}

impl DescriptionClient for MockDescriptionClient {
    fn describe(&self, request: &DescriptionRequest<'_>) -> Result<String, ClientFailure> {
        let h = seeded_digest(self.seed, &request.sample_id.to_le_bytes());
        let pick = |byte: u8, list: &[&'static str]| list[byte as usize % list.len()];
        Ok(format!(
            "This image contains a {} characterized by {}, {}, and {}",
            pick(h[0], MOCK_OBJECTS),
            pick(h[1], MOCK_ATTRIBUTES),
            pick(h[2], MOCK_ATTRIBUTES),
            pick(h[3], MOCK_ATTRIBUTES),
        ))
    }
}

/// Deterministic stand-in for a text encoder: hashes the string with a seed,
/// expands the digest into Gaussian components and normalises to unit length.
#[derive(Clone, Debug)]
pub struct MockTextEncoder {
    pub seed: u64,
    pub dim: usize,
}

impl TextEncoderClient for MockTextEncoder {
    fn encode(&self, text: &str) -> Result<Vec<f64>, ClientFailure> {
        let mut rng = ChaCha8Rng::from_seed(seeded_digest(self.seed, text.as_bytes()));
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&v);
        v.iter_mut().for_each(|x| *x /= len);
        Ok(v)
    }
}

/// Connection settings shared by the HTTP clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

fn build_http(config: &EndpointConfig) -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .connect_timeout(Duration::from_secs(10))
        .build()
        .unwrap_or_else(|_| reqwest::blocking::Client::new())
}

fn post_json(
    http: &reqwest::blocking::Client,
    config: &EndpointConfig,
    path: &str,
    body: &Value,
) -> Result<Value, ClientFailure> {
    let url = format!("{}/{path}", config.base_url.trim_end_matches('/'));
    let mut req = http.post(&url).json(body);
    if let Some(var) = &config.api_key_env {
        if let Ok(token) = std::env::var(var) {
            req = req.bearer_auth(token);
        }
    }
    let resp = req
        .send()
        .map_err(|e| ClientFailure::Transport(format!("{url}: {e}")))?;
    let status = resp.status();
    let text = resp
        .text()
        .map_err(|e| ClientFailure::Transport(format!("{url}: {e}")))?;
    if status.is_server_error() || status.as_u16() == 429 {
        return Err(ClientFailure::Transport(format!("{url}: HTTP {status}")));
    }
    if !status.is_success() {
        return Err(ClientFailure::Malformed(format!("{url}: HTTP {status}: {text}")));
    }
    serde_json::from_str(&text).map_err(|e| ClientFailure::Malformed(format!("{url}: {e}")))
}

/// Chat-completion client (`POST {base_url}/chat/completions`).
///
/// The request carries the prompt and, when available, the image reference as
/// an `image_url` content part; the reply text is taken from the first choice.
pub struct ChatCompletionClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
}

impl ChatCompletionClient {
    pub fn new(config: EndpointConfig) -> Self {
        let http = build_http(&config);
        Self { config, http }
    }

    pub fn request_body(&self, request: &DescriptionRequest<'_>) -> Value {
        let mut content = vec![json!({"type": "text", "text": request.prompt})];
        if let Some(image) = &request.image_ref {
            content.push(json!({"type": "image_url", "image_url": {"url": image}}));
        }
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": 0.0,
        })
    }
}

impl DescriptionClient for ChatCompletionClient {
    fn describe(&self, request: &DescriptionRequest<'_>) -> Result<String, ClientFailure> {
        let reply = post_json(&self.http, &self.config, "chat/completions", &self.request_body(request))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientFailure::Malformed("missing choices[0].message.content".into()))
    }
}

/// Embedding client (`POST {base_url}/embeddings`, reply `data[0].embedding`).
pub struct EmbeddingClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
}

impl EmbeddingClient {
    pub fn new(config: EndpointConfig) -> Self {
        let http = build_http(&config);
        Self { config, http }
    }
}

impl TextEncoderClient for EmbeddingClient {
    fn encode(&self, text: &str) -> Result<Vec<f64>, ClientFailure> {
        let body = json!({"model": self.config.model, "input": [text]});
        let reply = post_json(&self.http, &self.config, "embeddings", &body)?;
        let values = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ClientFailure::Malformed("missing data[0].embedding".into()))?;
        values
            .iter()
            .map(|v| {
                v.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ClientFailure::Malformed("non-numeric embedding entry".into()))
            })
            .collect()
    }
}
