use std::fs;
use std::path::{Path, PathBuf};

use gsec_core::checkpoint::{encoder_checkpoint, inner_checkpoint};
use gsec_core::data_io::{
    generate_synthetic, read_embeddings, read_labels, write_embeddings, write_file, write_labels, SyntheticSpec,
};
use gsec_core::evaluation::{
    ablation_matrix, bias_variance, score, write_ablation_csv, write_bv_csv, write_jsonl, BVOptions, BVReport,
    ModalityInputs,
};
use gsec_core::numerics::Matrix;
use gsec_core::pipeline::train_pipeline;
use gsec_core::semantic::{
    run_semantic, ChatCompletionClient, DescriptionClient, EmbeddingClient, MockDescriptionClient, MockTextEncoder,
    TextEncoderClient,
};
use gsec_core::{GsecError, Result};
use serde_json::json;

use crate::config::{require, PipelineConfig};

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GsecError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn csv_err(path: &Path, e: csv::Error) -> GsecError {
    GsecError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Explicit path from the config, or the conventional location under the
/// output directory.
fn input(explicit: &Option<PathBuf>, fallback: PathBuf, what: &str) -> Result<PathBuf> {
    match explicit {
        Some(_) => Ok(require(explicit, what)?.to_path_buf()),
        None => require(&Some(fallback), what).map(Path::to_path_buf),
    }
}

fn optional_input(explicit: &Option<PathBuf>, fallback: PathBuf, what: &str) -> Result<Option<PathBuf>> {
    match explicit {
        Some(_) => Ok(Some(require(explicit, what)?.to_path_buf())),
        None => Ok(fallback.exists().then_some(fallback)),
    }
}

pub struct Layout<'a> {
    pub root: &'a Path,
}

impl Layout<'_> {
    pub fn data(&self, name: &str) -> PathBuf {
        self.root.join("data").join(name)
    }

    pub fn semantic(&self, name: &str) -> PathBuf {
        self.root.join("semantic").join(name)
    }

    pub fn train(&self, name: &str) -> PathBuf {
        self.root.join("train").join(name)
    }
}

fn images_path(config: &PipelineConfig) -> Result<PathBuf> {
    let layout = Layout { root: &config.output_dir };
    input(&config.data.images, layout.data("images.gsec"), "image embeddings")
}

fn load_labels(config: &PipelineConfig, n: usize) -> Result<Option<Vec<u32>>> {
    let layout = Layout { root: &config.output_dir };
    let Some(path) = optional_input(&config.data.labels, layout.data("labels.gsecl"), "labels")? else {
        return Ok(None);
    };
    let labels = read_labels(&path)?;
    if labels.len() != n {
        return Err(GsecError::Config(format!(
            "{} has {} labels for {n} samples",
            path.display(),
            labels.len()
        )));
    }
    Ok(Some(labels))
}

/// Loads the optional text modalities without requiring either.
struct Modalities {
    images: Matrix,
    generative: Option<Matrix>,
    matching: Option<Matrix>,
}

impl Modalities {
    fn load(config: &PipelineConfig) -> Result<Self> {
        let layout = Layout { root: &config.output_dir };
        let images = read_embeddings(images_path(config)?)?;
        let load = |p: Option<PathBuf>| p.map(read_embeddings).transpose();
        let generative = load(optional_input(
            &config.data.texts,
            layout.semantic("text_embeddings.gsec"),
            "generative text embeddings",
        )?)?;
        let matching = load(optional_input(
            &config.data.matching_texts,
            layout.data("texts.gsec"),
            "matching text embeddings",
        )?)?;
        Ok(Self {
            images,
            generative,
            matching,
        })
    }

    fn inputs(&self) -> ModalityInputs<'_> {
        ModalityInputs {
            images: &self.images,
            generative: self.generative.as_ref(),
            matching: self.matching.as_ref(),
        }
    }
}

pub fn synth(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let s = &config.synth;
    let ds = generate_synthetic(&SyntheticSpec {
        samples: s.samples,
        dim: s.dim,
        clusters: s.clusters,
        separation: s.separation,
        modality_noise: s.modality_noise,
        seed: config.seed,
    })?;
    let layout = Layout { root: &config.output_dir };
    ensure_dir(&config.output_dir.join("data"))?;
    let (images, texts, labels) = (layout.data("images.gsec"), layout.data("texts.gsec"), layout.data("labels.gsecl"));
    write_embeddings(ds.images(), &images)?;
    write_embeddings(ds.texts().expect("synthetic data has texts"), &texts)?;
    write_labels(ds.labels().expect("synthetic data has labels"), &labels)?;
    Ok(vec![images, texts, labels])
}

fn image_url(template: &Option<String>) -> impl Fn(u64) -> Option<String> + Sync + '_ {
    move |id| template.as_ref().map(|t| t.replace("{id}", &id.to_string()))
}

pub fn semantic(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let images = read_embeddings(images_path(config)?)?;
    let ids: Vec<u64> = (0..images.rows() as u64).collect();
    let clients = &config.clients;
    let (describer, encoder): (Box<dyn DescriptionClient>, Box<dyn TextEncoderClient>) = if clients.mock {
        (
            Box::new(MockDescriptionClient { seed: config.seed }),
            Box::new(MockTextEncoder {
                seed: config.seed,
                dim: clients.mock_encoder_dim.unwrap_or(images.cols()),
            }),
        )
    } else {
        let need = |e: &Option<_>, name: &str| {
            e.clone()
                .ok_or_else(|| GsecError::Config(format!("live mode needs [clients.{name}] endpoint settings")))
        };
        (
            Box::new(ChatCompletionClient::new(need(&clients.describer, "describer")?)),
            Box::new(EmbeddingClient::new(need(&clients.encoder, "encoder")?)),
        )
    };
    let out = run_semantic(
        &images,
        &ids,
        &config.semantic,
        describer.as_ref(),
        encoder.as_ref(),
        &image_url(&clients.image_url_template),
        config.seed,
    )?;
    let layout = Layout { root: &config.output_dir };
    ensure_dir(&config.output_dir.join("semantic"))?;
    let texts = layout.semantic("text_embeddings.gsec");
    let classes = layout.semantic("class_embeddings.gsec");
    let descriptions = layout.semantic("descriptions.jsonl");
    let preclusters = layout.semantic("preclusters.gsecl");
    write_embeddings(&out.text_embeddings, &texts)?;
    write_embeddings(&out.class_embeddings, &classes)?;
    gsec_core::semantic::write_descriptions_jsonl(&out.descriptions, &descriptions)?;
    let assignment: Vec<u32> = out.preclusters.assignment.iter().map(|&a| a as u32).collect();
    write_labels(&assignment, &preclusters)?;
    Ok(vec![texts, classes, descriptions, preclusters])
}

fn write_loss_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| GsecError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn train(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let configuration = config.configuration;
    let layout = Layout { root: &config.output_dir };
    let images = read_embeddings(images_path(config)?)?;
    let texts = match configuration.text_source() {
        gsec_core::evaluation::TextSource::ImageCopy => images.clone(),
        gsec_core::evaluation::TextSource::Generative => read_embeddings(input(
            &config.data.texts,
            layout.semantic("text_embeddings.gsec"),
            "generative text embeddings",
        )?)?,
        gsec_core::evaluation::TextSource::Matching => read_embeddings(input(
            &config.data.matching_texts,
            layout.data("texts.gsec"),
            "matching text embeddings",
        )?)?,
    };
    let settings = config.train_settings().with_architecture(configuration.architecture());
    let trained = train_pipeline(&images, &texts, &settings)?;

    ensure_dir(&config.output_dir.join("train"))?;
    let meta = json!({
        "configuration": configuration,
        "seed": config.seed,
        "clusters": config.clusters,
        "inner": settings.inner,
        "outer": settings.outer,
    });
    let inner_ck = layout.train("inner.gsck");
    let outer_ck = layout.train("outer.gsck");
    inner_checkpoint(&trained.inner.model, meta.clone()).write(&inner_ck)?;
    encoder_checkpoint(&trained.outer.encoder, meta).write(&outer_ck)?;

    let inner_csv = layout.train("inner_loss.csv");
    write_loss_csv(
        &inner_csv,
        &["epoch", "L_dist", "L_conf", "L_bal", "L_inner"],
        trained.inner.history.iter().map(|r| {
            let l = r.loss;
            vec![r.epoch.to_string(), l.dist.to_string(), l.conf.to_string(), l.bal.to_string(), l.total.to_string()]
        }),
    )?;
    let outer_csv = layout.train("outer_loss.csv");
    write_loss_csv(
        &outer_csv,
        &["epoch", "L_align", "H_mean", "L_outer"],
        trained.outer.history.iter().map(|r| {
            let l = r.loss;
            vec![r.epoch.to_string(), l.align.to_string(), l.entropy.to_string(), l.total.to_string()]
        }),
    )?;

    let assignments = trained.predict(&images, &texts)?;
    let labels_path = layout.train("assignments.gsecl");
    write_labels(&assignments, &labels_path)?;
    let csv_path = layout.train("assignments.csv");
    write_loss_csv(
        &csv_path,
        &["sample_id", "cluster"],
        assignments.iter().enumerate().map(|(i, c)| vec![i.to_string(), c.to_string()]),
    )?;
    Ok(vec![inner_ck, outer_ck, inner_csv, outer_csv, labels_path, csv_path])
}

pub fn eval(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let layout = Layout { root: &config.output_dir };
    let predictions = read_labels(input(
        &config.data.predictions,
        layout.train("assignments.gsecl"),
        "predictions",
    )?)?;
    let labels = load_labels(config, predictions.len())?
        .ok_or_else(|| GsecError::Config("metrics require ground-truth labels; none were provided".into()))?;
    let scores = score(&predictions, &labels)?;
    let dir = config.output_dir.join("eval");
    ensure_dir(&dir)?;
    let json_path = dir.join("metrics.json");
    let mut text = serde_json::to_string_pretty(&scores).expect("scores serialize");
    text.push('\n');
    write_file(&json_path, text.as_bytes())?;
    let csv_path = dir.join("metrics.csv");
    write_loss_csv(
        &csv_path,
        &["acc", "nmi", "ari"],
        std::iter::once(vec![scores.acc.to_string(), scores.nmi.to_string(), scores.ari.to_string()]),
    )?;
    log::info!("acc={} nmi={} ari={}", scores.acc, scores.nmi, scores.ari);
    Ok(vec![json_path, csv_path])
}

fn labelled(config: &PipelineConfig) -> Result<(Modalities, Vec<u32>)> {
    let m = Modalities::load(config)?;
    let labels = load_labels(config, m.images.rows())?
        .ok_or_else(|| GsecError::Config("this command requires ground-truth labels; none were provided".into()))?;
    Ok((m, labels))
}

pub fn bias_variance_cmd(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let (m, labels) = labelled(config)?;
    let inputs = m.inputs();
    let exp = &config.experiment;
    if exp.configurations.is_empty() {
        return Err(GsecError::Config("no configurations selected".into()));
    }
    for &c in &exp.configurations {
        inputs.texts_for(c)?;
    }
    let options = BVOptions {
        run_count: exp.run_count,
        seed: config.seed,
        soft: exp.soft,
    };
    let settings = config.train_settings();
    let entries = exp
        .configurations
        .iter()
        .map(|&c| bias_variance(&inputs, &labels, c, &settings, &options))
        .collect::<Result<Vec<_>>>()?;
    let report = BVReport {
        seed: config.seed,
        entries,
    };
    let dir = config.output_dir.join("bias_variance");
    ensure_dir(&dir)?;
    let csv_path = dir.join("report.csv");
    let jsonl_path = dir.join("report.jsonl");
    write_bv_csv(&report, &csv_path)?;
    write_jsonl(&report.entries, &jsonl_path)?;
    Ok(vec![csv_path, jsonl_path])
}

pub fn ablate(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let (m, labels) = labelled(config)?;
    let exp = &config.experiment;
    if exp.configurations.is_empty() || exp.seeds.is_empty() {
        return Err(GsecError::Config("ablation needs at least one configuration and one seed".into()));
    }
    let rows = ablation_matrix(&m.inputs(), &labels, &exp.configurations, &exp.seeds, &config.train_settings())?;
    let dir = config.output_dir.join("ablate");
    ensure_dir(&dir)?;
    let csv_path = dir.join("ablation.csv");
    let jsonl_path = dir.join("ablation.jsonl");
    write_ablation_csv(&rows, &csv_path)?;
    write_jsonl(&rows, &jsonl_path)?;
    Ok(vec![csv_path, jsonl_path])
}
