use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GsecError, Result};
use crate::numerics::Matrix;
use crate::semantic::client::{ClientFailure, DescriptionClient, DescriptionRequest, TextEncoderClient};

/// Instruction sent with every representative image.
pub const DESCRIPTION_PROMPT: &str = "Identify and describe the main object in this image. \
Respond with the format: 'This image contains a [object] characterized by [attribute1], \
[attribute2], and [attribute3]'";

const TEMPLATE_HEAD: &str = "This image contains";
const TEMPLATE_LINK: &str = "characterized by";

pub fn build_prompt() -> &'static str {
    DESCRIPTION_PROMPT
}

/// A generated description for one representative sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDescription {
    pub sample_id: u64,
    pub cluster: usize,
    pub text: String,
}

/// Retry and concurrency policy for client calls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientPolicy {
    /// Extra attempts after a transport failure.
    pub max_retries: usize,
    /// Upper bound on concurrent requests.
    pub max_in_flight: usize,
}

impl Default for ClientPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            max_in_flight: 4,
        }
    }
}

pub fn follows_template(text: &str) -> bool {
    text.contains(TEMPLATE_HEAD) && text.contains(TEMPLATE_LINK)
}

/// Coerces a reply into the template: keeps the first line starting at the
/// template head if present, otherwise prefixes the head to the reply's first
/// line.
pub fn normalize_description(raw: &str) -> String {
    let trimmed = raw.trim();
    let from_head = trimmed.find(TEMPLATE_HEAD).map(|pos| &trimmed[pos..]);
    let body = from_head.unwrap_or(trimmed);
    let line = body
        .lines()
        .next()
        .unwrap_or("")
        .trim()
        .trim_matches(|c| c == '\'' || c == '"')
        .trim_end_matches('.');
    if from_head.is_some() {
        line.to_string()
    } else {
        format!("{TEMPLATE_HEAD} a {line}")
    }
}

fn with_pool<T: Send>(in_flight: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(in_flight.max(1))
        .build()
        .map_err(|e| GsecError::Config(format!("cannot start client worker pool: {e}")))?;
    Ok(pool.install(job))
}

fn call_with_retries<T>(
    sample_id: u64,
    max_retries: usize,
    mut call: impl FnMut() -> std::result::Result<T, ClientFailure>,
) -> Result<T> {
    let mut attempt = 0;
    loop {
        match call() {
            Ok(v) => return Ok(v),
            Err(ClientFailure::Transport(reason)) if attempt < max_retries => {
                log::warn!("sample {sample_id}: {reason}; retrying");
                attempt += 1;
            }
            Err(failure) => {
                return Err(GsecError::Client {
                    sample_id,
                    reason: failure.to_string(),
                })
            }
        }
    }
}

fn describe_one(
    client: &dyn DescriptionClient,
    sample_id: u64,
    image_ref: Option<String>,
    policy: ClientPolicy,
) -> Result<String> {
    let request = DescriptionRequest {
        sample_id,
        prompt: DESCRIPTION_PROMPT,
        image_ref,
    };
    let ask = || {
        let text = call_with_retries(sample_id, policy.max_retries, || client.describe(&request))?;
        if text.trim().is_empty() {
            return Err(GsecError::ResponseFormat {
                sample_id,
                reason: "empty description".into(),
            });
        }
        Ok(text)
    };
    let first = ask()?;
    if follows_template(&first) {
        return Ok(normalize_description(&first));
    }
    let second = ask()?;
    Ok(normalize_description(&second))
}

/// One description per `(sample_id, cluster)` pair, in input order.
///
/// `image_ref` maps a sample id to the reference sent to the client.
pub fn generate_descriptions(
    representatives: &[(u64, usize)],
    client: &dyn DescriptionClient,
    image_ref: &(dyn Fn(u64) -> Option<String> + Sync),
    policy: ClientPolicy,
) -> Result<Vec<ClassDescription>> {
    if representatives.is_empty() {
        return Err(GsecError::InvalidInput("no representatives to describe".into()));
    }
    with_pool(policy.max_in_flight, || {
        representatives
            .par_iter()
            .map(|&(sample_id, cluster)| {
                let text = describe_one(client, sample_id, image_ref(sample_id), policy)?;
                Ok(ClassDescription {
                    sample_id,
                    cluster,
                    text,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// Encodes each description; row `j` is the embedding of description `j`.
pub fn encode_descriptions(
    descriptions: &[ClassDescription],
    encoder: &dyn TextEncoderClient,
    policy: ClientPolicy,
) -> Result<Matrix> {
    if descriptions.is_empty() {
        return Err(GsecError::InvalidInput("no descriptions to encode".into()));
    }
    let rows = with_pool(policy.max_in_flight, || {
        descriptions
            .par_iter()
            .map(|d| {
                let v = call_with_retries(d.sample_id, policy.max_retries, || encoder.encode(&d.text))?;
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    return Err(GsecError::ResponseFormat {
                        sample_id: d.sample_id,
                        reason: "embedding is empty or non-finite".into(),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Matrix::from_rows(&rows)
}

/// Averages description embeddings per pre-cluster; rows follow the order in
/// which clusters first appear in `descriptions`.
pub fn aggregate_per_cluster(descriptions: &[ClassDescription], embeddings: &Matrix) -> Result<Matrix> {
    if descriptions.len() != embeddings.rows() {
        return Err(GsecError::Shape(format!(
            "{} descriptions but {} embeddings",
            descriptions.len(),
            embeddings.rows()
        )));
    }
    let mut order: Vec<usize> = Vec::new();
    for d in descriptions {
        if !order.contains(&d.cluster) {
            order.push(d.cluster);
        }
    }
    let rows: Vec<Vec<f64>> = order
        .iter()
        .map(|&c| {
            let members: Vec<usize> = descriptions
                .iter()
                .enumerate()
                .filter(|(_, d)| d.cluster == c)
                .map(|(j, _)| j)
                .collect();
            embeddings.select_rows(&members).column_means()
        })
        .collect();
    Matrix::from_rows(&rows)
}

pub fn write_descriptions_jsonl(descriptions: &[ClassDescription], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for d in descriptions {
        serde_json::to_writer(&mut out, d).expect("description serializes");
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| GsecError::io(path, e))?;
    file.write_all(&out).map_err(|e| GsecError::io(path, e))
}

pub fn read_descriptions_jsonl(path: impl AsRef<Path>) -> Result<Vec<ClassDescription>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| GsecError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GsecError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| GsecError::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    use super::*;
    use crate::semantic::client::{MockDescriptionClient, MockTextEncoder};

    const PROMPT_BYTES: usize = 172;

    #[test]
    fn prompt_is_constant() {
        assert!(build_prompt().contains("This image contains a [object] characterized by"));
        assert!(build_prompt().starts_with("Identify and describe the main object in this image."));
        assert_eq!(build_prompt(), build_prompt());
        assert_eq!(build_prompt().len(), PROMPT_BYTES);
    }

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_description("Sure! This image contains a cat characterized by fur, eyes, and tail.\nMore"),
            "This image contains a cat characterized by fur, eyes, and tail"
        );
        assert_eq!(
            normalize_description("  a small red boat\nwith sails"),
            "This image contains a a small red boat"
        );
    }

    /// Replays scripted replies per call.
    struct Scripted {
        replies: Mutex<Vec<std::result::Result<String, ClientFailure>>>,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new(mut replies: Vec<std::result::Result<String, ClientFailure>>) -> Self {
            replies.reverse();
            Self {
                replies: Mutex::new(replies),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl DescriptionClient for Scripted {
        fn describe(&self, _: &DescriptionRequest<'_>) -> std::result::Result<String, ClientFailure> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies.lock().unwrap().pop().expect("script exhausted")
        }
    }

    fn no_ref(_: u64) -> Option<String> {
        None
    }

    #[test]
    fn off_template_reply_gets_one_retry_then_normalization() {
        let client = Scripted::new(vec![Ok("a dog".into()), Ok("still a dog".into())]);
        let out = generate_descriptions(&[(4, 0)], &client, &no_ref, ClientPolicy::default()).unwrap();
        assert_eq!(client.calls.load(Ordering::SeqCst), 2);
        assert_eq!(out[0].text, "This image contains a still a dog");

        let client = Scripted::new(vec![
            Ok("a dog".into()),
            Ok("This image contains a dog characterized by ears, paws, and a tail".into()),
        ]);
        let out = generate_descriptions(&[(4, 0)], &client, &no_ref, ClientPolicy::default()).unwrap();
        assert!(follows_template(&out[0].text));
    }

    #[test]
    fn transport_failures_are_retried_then_reported_with_sample_id() {
        let client = Scripted::new(vec![
            Err(ClientFailure::Transport("timeout".into())),
            Ok("This image contains a car characterized by wheels, doors, and glass".into()),
        ]);
        let policy = ClientPolicy { max_retries: 2, max_in_flight: 1 };
        assert!(generate_descriptions(&[(9, 1)], &client, &no_ref, policy).is_ok());

        let client = Scripted::new(vec![Err(ClientFailure::Transport("down".into())); 3]);
        let err = generate_descriptions(&[(9, 1)], &client, &no_ref, policy).unwrap_err();
        assert!(matches!(err, GsecError::Client { sample_id: 9, .. }));
        assert_eq!(client.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn empty_reply_is_format_error() {
        let client = Scripted::new(vec![Ok("   ".into())]);
        let err = generate_descriptions(&[(2, 0)], &client, &no_ref, ClientPolicy::default()).unwrap_err();
        assert!(matches!(err, GsecError::ResponseFormat { sample_id: 2, .. }));
    }

    #[test]
    fn cardinality_and_order_preserved() {
        let reps: Vec<(u64, usize)> = (0..30).map(|i| (i * 7, (i % 6) as usize)).collect();
        let client = MockDescriptionClient { seed: 5 };
        let out = generate_descriptions(&reps, &client, &no_ref, ClientPolicy::default()).unwrap();
        assert_eq!(out.len(), 30);
        for (d, r) in out.iter().zip(&reps) {
            assert_eq!((d.sample_id, d.cluster), *r);
        }
        let again = generate_descriptions(&reps, &client, &no_ref, ClientPolicy::default()).unwrap();
        assert_eq!(out, again);

        let enc = MockTextEncoder { seed: 1, dim: 8 };
        let m = encode_descriptions(&out, &enc, ClientPolicy::default()).unwrap();
        assert_eq!((m.rows(), m.cols()), (30, 8));
        for (j, d) in out.iter().enumerate() {
            for (k, e) in out.iter().enumerate() {
                if d.text == e.text {
                    assert_eq!(m.row(j), m.row(k));
                }
            }
        }
    }

    #[test]
    fn per_cluster_aggregation_averages() {
        let descs: Vec<ClassDescription> = [(0, 2), (1, 0), (2, 2)]
            .iter()
            .map(|&(id, c)| ClassDescription { sample_id: id, cluster: c, text: String::new() })
            .collect();
        let emb = Matrix::from_rows(&[vec![1.0, 0.0], vec![5.0, 5.0], vec![0.0, 1.0]]).unwrap();
        let agg = aggregate_per_cluster(&descs, &emb).unwrap();
        assert_eq!(agg.row(0), &[0.5, 0.5]);
        assert_eq!(agg.row(1), &[5.0, 5.0]);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let descs = vec![ClassDescription { sample_id: 3, cluster: 1, text: "x \"y\"".into() }];
        write_descriptions_jsonl(&descs, &path).unwrap();
        let line = std::fs::read_to_string(&path).unwrap();
        assert_eq!(line, "{\"sample_id\":3,\"cluster\":1,\"text\":\"x \\\"y\\\"\"}\n");
        assert_eq!(read_descriptions_jsonl(&path).unwrap(), descs);
    }
}
