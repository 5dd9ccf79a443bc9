use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::bootstrap;
use crate::error::{GsecError, Result};
use crate::evaluation::metrics::{accuracy, align_to_truth, score, ContingencyTable};
use crate::numerics::{squared_distance, Matrix};
use crate::pipeline::{train_pipeline, Architecture, TrainSettings};

/// Where a configuration takes its text-side embeddings from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextSource {
    /// No text: the image embeddings fill the text branch as well.
    ImageCopy,
    /// Precomputed matching-based text embeddings.
    Matching,
    /// Synthesized generative text embeddings.
    Generative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BVConfigurationId {
    #[serde(rename = "image")]
    Image,
    #[serde(rename = "image+ensemble")]
    ImageEnsemble,
    #[serde(rename = "image+m-text")]
    ImageMText,
    #[serde(rename = "image+g-text")]
    ImageGText,
    #[serde(rename = "gsec")]
    Gsec,
}

impl BVConfigurationId {
    pub const ALL: [BVConfigurationId; 5] = [
        Self::Image,
        Self::ImageEnsemble,
        Self::ImageMText,
        Self::ImageGText,
        Self::Gsec,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Image => "image",
            Self::ImageEnsemble => "image+ensemble",
            Self::ImageMText => "image+m-text",
            Self::ImageGText => "image+g-text",
            Self::Gsec => "gsec",
        }
    }

    pub fn architecture(self) -> Architecture {
        match self {
            Self::ImageEnsemble | Self::Gsec => Architecture::Ensemble,
            _ => Architecture::Linear,
        }
    }

    pub fn text_source(self) -> TextSource {
        match self {
            Self::Image | Self::ImageEnsemble => TextSource::ImageCopy,
            Self::ImageMText => TextSource::Matching,
            Self::ImageGText | Self::Gsec => TextSource::Generative,
        }
    }
}

impl fmt::Display for BVConfigurationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BVConfigurationId {
    type Err = GsecError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == key)
            .ok_or_else(|| {
                GsecError::Config(format!(
                    "unknown configuration '{s}'; expected one of image, image+ensemble, image+m-text, image+g-text, gsec"
                ))
            })
    }
}

/// Embeddings available to the experiment harness.
#[derive(Clone, Copy, Debug)]
pub struct ModalityInputs<'a> {
    pub images: &'a Matrix,
    pub generative: Option<&'a Matrix>,
    pub matching: Option<&'a Matrix>,
}

impl<'a> ModalityInputs<'a> {
    /// Text-side matrix for `configuration`, or a config error naming what is
    /// missing.
    pub fn texts_for(&self, configuration: BVConfigurationId) -> Result<&'a Matrix> {
        let texts = match configuration.text_source() {
            TextSource::ImageCopy => Some(self.images),
            TextSource::Matching => self.matching,
            TextSource::Generative => self.generative,
        };
        let texts = texts.ok_or_else(|| {
            let what = match configuration.text_source() {
                TextSource::Matching => "matching-based text embeddings",
                _ => "generative text embeddings",
            };
            GsecError::Config(format!("configuration {configuration} needs {what}, which were not provided"))
        })?;
        if texts.rows() != self.images.rows() {
            return Err(GsecError::Shape(format!(
                "{configuration}: {} text rows for {} images",
                texts.rows(),
                self.images.rows()
            )));
        }
        Ok(texts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BVEntry {
    pub configuration: BVConfigurationId,
    pub bias: f64,
    pub variance: f64,
    /// Mean per-sample spread of aligned probability vectors, when requested.
    pub soft_variance: Option<f64>,
    pub run_count: usize,
    pub run_accuracies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BVReport {
    pub seed: u64,
    pub entries: Vec<BVEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BVOptions {
    pub run_count: usize,
    pub seed: u64,
    pub soft: bool,
}

impl Default for BVOptions {
    fn default() -> Self {
        Self {
            run_count: 10,
            seed: 0,
            soft: false,
        }
    }
}

fn majority(votes: impl Iterator<Item = u32>) -> u32 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_default() += 1;
    }
    // BTreeMap iterates in label order, so the lowest label wins ties.
    let mut best = (0, 0);
    for (label, count) in counts {
        if count > best.1 {
            best = (label, count);
        }
    }
    best.0
}

/// Hard-label 0-1 decomposition. Each run is aligned to the truth first; the
/// per-sample majority vote is the main prediction.
/// Returns `(bias, variance)`.
pub fn decompose(predictions: &[Vec<u32>], truth: &[u32]) -> Result<(f64, f64)> {
    if predictions.len() < 2 {
        return Err(GsecError::Config("bias/variance needs at least two runs".into()));
    }
    if truth.is_empty() {
        return Err(GsecError::InvalidInput("no evaluation samples".into()));
    }
    let aligned = predictions
        .iter()
        .map(|p| align_to_truth(p, truth))
        .collect::<Result<Vec<_>>>()?;
    let runs = aligned.len() as f64;
    let mut wrong = 0usize;
    let mut spread = 0.0;
    for (i, &t) in truth.iter().enumerate() {
        let main = majority(aligned.iter().map(|r| r[i]));
        if main != t {
            wrong += 1;
        }
        spread += aligned.iter().filter(|r| r[i] != main).count() as f64 / runs;
    }
    let n = truth.len() as f64;
    Ok((wrong as f64 / n, spread / n))
}

/// Mean over samples of the average squared distance between each run's
/// aligned probability vector and the across-run mean vector.
pub fn soft_variance(probabilities: &[Matrix], truth: &[u32]) -> Result<f64> {
    if probabilities.len() < 2 {
        return Err(GsecError::Config("bias/variance needs at least two runs".into()));
    }
    let mut aligned = Vec::with_capacity(probabilities.len());
    let mut width = 0;
    for probs in probabilities {
        if probs.rows() != truth.len() {
            return Err(GsecError::Shape(format!(
                "{} probability rows for {} samples",
                probs.rows(),
                truth.len()
            )));
        }
        let pred: Vec<u32> = crate::outer::hard_assignments(probs);
        let table = ContingencyTable::new(&pred, truth)?;
        let (_, matching) = table.best_matching();
        let mut column = vec![usize::MAX; probs.cols()];
        let mut used: Vec<bool> = Vec::new();
        for (p, t) in &matching {
            if let Some(t) = t {
                column[*p as usize] = *t as usize;
                if used.len() <= *t as usize {
                    used.resize(*t as usize + 1, false);
                }
                used[*t as usize] = true;
            }
        }
        let mut next = 0;
        for c in column.iter_mut().filter(|c| **c == usize::MAX) {
            while used.get(next).copied().unwrap_or(false) {
                next += 1;
            }
            *c = next;
            next += 1;
        }
        width = width.max(column.iter().max().map_or(0, |m| m + 1));
        aligned.push((probs, column));
    }
    let runs = aligned.len() as f64;
    let mut total = 0.0;
    let mut vectors = vec![vec![0.0; width]; aligned.len()];
    for i in 0..truth.len() {
        for ((probs, column), v) in aligned.iter().zip(&mut vectors) {
            v.fill(0.0);
            for (c, p) in probs.row(i).iter().enumerate() {
                v[column[c]] = *p;
            }
        }
        let mut mean = vec![0.0; width];
        for v in &vectors {
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += x / runs);
        }
        total += vectors.iter().map(|v| squared_distance(v, &mean)).sum::<f64>() / runs;
    }
    Ok(total / truth.len() as f64)
}

/// Trains `configuration` on `run_count` bootstrap resamples and decomposes
/// the error of its predictions on the full dataset.
pub fn bias_variance(
    inputs: &ModalityInputs<'_>,
    labels: &[u32],
    configuration: BVConfigurationId,
    settings: &TrainSettings,
    options: &BVOptions,
) -> Result<BVEntry> {
    let texts = inputs.texts_for(configuration)?;
    let images = inputs.images;
    if labels.len() != images.rows() {
        return Err(GsecError::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            images.rows()
        )));
    }
    if options.run_count < 2 {
        return Err(GsecError::Config("bias/variance needs at least two runs".into()));
    }
    let settings = settings.with_architecture(configuration.architecture());
    let samples = bootstrap(images.rows(), options.run_count, options.seed)?;
    let runs = samples
        .par_iter()
        .map(|sample| {
            let trained = train_pipeline(
                &images.select_rows(&sample.indices),
                &texts.select_rows(&sample.indices),
                &settings.with_seed(sample.seed),
            )?;
            let probs = trained.probabilities(images, texts)?;
            Ok((crate::outer::hard_assignments(&probs), probs))
        })
        .collect::<Result<Vec<_>>>()?;
    let (predictions, probabilities): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let (bias, variance) = decompose(&predictions, labels)?;
    let soft = if options.soft {
        Some(soft_variance(&probabilities, labels)?)
    } else {
        None
    };
    let run_accuracies = predictions
        .iter()
        .map(|p| accuracy(p, labels))
        .collect::<Result<Vec<_>>>()?;
    Ok(BVEntry {
        configuration,
        bias,
        variance,
        soft_variance: soft,
        run_count: options.run_count,
        run_accuracies,
    })
}

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub configuration: BVConfigurationId,
    pub seed: u64,
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Trains every configuration with every seed on the full dataset and scores
/// the predictions. All configurations are checked for missing inputs before
/// any training starts.
pub fn ablation_matrix(
    inputs: &ModalityInputs<'_>,
    labels: &[u32],
    configurations: &[BVConfigurationId],
    seeds: &[u64],
    settings: &TrainSettings,
) -> Result<Vec<AblationRow>> {
    let gaps: Vec<String> = configurations
        .iter()
        .filter_map(|&c| inputs.texts_for(c).err().map(|e| e.to_string()))
        .collect();
    if !gaps.is_empty() {
        return Err(GsecError::Config(gaps.join("; ")));
    }
    let jobs: Vec<(BVConfigurationId, u64)> = configurations
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    jobs.par_iter()
        .map(|&(configuration, seed)| {
            let texts = inputs.texts_for(configuration)?;
            let run_settings = settings.with_architecture(configuration.architecture()).with_seed(seed);
            let trained = train_pipeline(inputs.images, texts, &run_settings)?;
            let s = score(&trained.predict(inputs.images, texts)?, labels)?;
            Ok(AblationRow {
                configuration,
                seed,
                acc: s.acc,
                nmi: s.nmi,
                ari: s.ari,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn identical_runs_have_zero_variance() {
        let truth = vec![0, 0, 1, 1, 2, 2, 0, 1];
        let run = vec![2, 2, 0, 1, 1, 1, 2, 0];
        let (bias, variance) = decompose(&vec![run.clone(); 5], &truth).unwrap();
        assert_eq!(variance, 0.0);
        assert_abs_diff_eq!(bias, 1.0 - accuracy(&run, &truth).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn random_binary_runs_approach_half_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 400;
        let truth: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let runs: Vec<Vec<u32>> = (0..200)
            .map(|_| (0..n).map(|_| rng.random_range(0..2)).collect())
            .collect();
        let (_, variance) = decompose(&runs, &truth).unwrap();
        assert!((variance - 0.5).abs() < 0.05, "{variance}");
    }

    #[test]
    fn relabelled_runs_do_not_count_as_variance() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        let runs = vec![vec![0, 0, 1, 1, 2, 2], vec![2, 2, 0, 0, 1, 1], vec![1, 1, 2, 2, 0, 0]];
        assert_eq!(decompose(&runs, &truth).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn soft_variance_of_identical_runs_is_zero() {
        let probs = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        let truth = [0, 1, 0];
        assert_eq!(soft_variance(&[probs.clone(), probs], &truth).unwrap(), 0.0);
    }

    #[test]
    fn soft_variance_aligns_columns() {
        let a = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let swapped = Matrix::from_rows(&[vec![0.1, 0.9], vec![0.8, 0.2]]).unwrap();
        assert_abs_diff_eq!(soft_variance(&[a, swapped], &[0, 1]).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn configuration_names_round_trip() {
        for c in BVConfigurationId::ALL {
            assert_eq!(c.as_str().parse::<BVConfigurationId>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
        }
        assert!(matches!("image+x".parse::<BVConfigurationId>(), Err(GsecError::Config(_))));
    }

    #[test]
    fn missing_text_is_config_error() {
        let images = Matrix::identity(4);
        let inputs = ModalityInputs {
            images: &images,
            generative: None,
            matching: None,
        };
        assert!(inputs.texts_for(BVConfigurationId::Image).is_ok());
        for c in [BVConfigurationId::ImageMText, BVConfigurationId::ImageGText, BVConfigurationId::Gsec] {
            assert!(matches!(inputs.texts_for(c), Err(GsecError::Config(_))));
        }
        let err = ablation_matrix(
            &inputs,
            &[0, 0, 1, 1],
            &[BVConfigurationId::ImageMText, BVConfigurationId::Gsec],
            &[0],
            &TrainSettings::default(),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matching") && msg.contains("generative"), "{msg}");
    }

    #[test]
    fn majority_prefers_lowest_label_on_ties() {
        assert_eq!(majority([3, 1, 3, 1].into_iter()), 1);
        assert_eq!(majority([2, 2, 0].into_iter()), 2);
    }
}
