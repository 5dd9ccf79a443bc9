mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gsec_core::evaluation::BVConfigurationId;
use gsec_core::{GsecError, Result};

use crate::config::PipelineConfig;
use crate::manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "gsec", version, about = "Bi-layer ensemble image clustering with generative semantic embeddings")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of clusters K.
    #[arg(long, global = true)]
    clusters: Option<usize>,
    #[arg(long, global = true)]
    images: Option<PathBuf>,
    /// Generative text embeddings.
    #[arg(long, global = true)]
    texts: Option<PathBuf>,
    /// Matching-based text embeddings.
    #[arg(long, global = true)]
    matching_texts: Option<PathBuf>,
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    /// Use the configured HTTP endpoints instead of the offline mock clients.
    #[arg(long, global = true)]
    live: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic labelled dataset.
    Synth {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        separation: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Describe representatives and synthesize per-image text embeddings.
    Semantic {
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Train the inner ensemble, then the task encoder.
    Train {
        #[arg(long)]
        configuration: Option<BVConfigurationId>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Bootstrap bias/variance decomposition.
    BiasVariance {
        /// Bootstrap runs per configuration.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        configurations: Option<Vec<BVConfigurationId>>,
        #[arg(long)]
        soft: bool,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Metrics table over configurations and seeds.
    Ablate {
        #[arg(long, value_delimiter = ',')]
        configurations: Option<Vec<BVConfigurationId>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Semantic { .. } => "semantic",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::BiasVariance { .. } => "bias-variance",
            Command::Ablate { .. } => "ablate",
        }
    }
}

fn set_epochs(config: &mut PipelineConfig, epochs: Option<usize>) {
    if let Some(e) = epochs {
        config.inner.epochs = e;
        config.outer.epochs = e;
    }
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let c = &cli.common;
    if let Some(v) = &c.out {
        config.output_dir = v.clone();
    }
    if let Some(v) = c.seed {
        config.seed = v;
    }
    if let Some(v) = c.clusters {
        config.clusters = v;
    }
    for (slot, flag) in [
        (&mut config.data.images, &c.images),
        (&mut config.data.texts, &c.texts),
        (&mut config.data.matching_texts, &c.matching_texts),
        (&mut config.data.labels, &c.labels),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if c.live {
        config.clients.mock = false;
    }
    match &cli.command {
        Command::Synth {
            samples,
            dim,
            separation,
            noise,
        } => {
            let s = &mut config.synth;
            s.samples = samples.unwrap_or(s.samples);
            s.dim = dim.unwrap_or(s.dim);
            s.separation = separation.unwrap_or(s.separation);
            s.modality_noise = noise.unwrap_or(s.modality_noise);
        }
        Command::Semantic { temperature } => {
            if let Some(t) = temperature {
                config.semantic.temperature = *t;
            }
        }
        Command::Train { configuration, epochs } => {
            if let Some(c) = configuration {
                config.configuration = *c;
            }
            set_epochs(&mut config, *epochs);
        }
        Command::Eval { predictions } => {
            if predictions.is_some() {
                config.data.predictions.clone_from(predictions);
            }
        }
        Command::BiasVariance {
            runs,
            configurations,
            soft,
            epochs,
        } => {
            if let Some(r) = runs {
                config.experiment.run_count = *r;
            }
            if let Some(c) = configurations {
                config.experiment.configurations.clone_from(c);
            }
            config.experiment.soft |= soft;
            set_epochs(&mut config, *epochs);
        }
        Command::Ablate {
            configurations,
            seeds,
            epochs,
        } => {
            if let Some(c) = configurations {
                config.experiment.configurations.clone_from(c);
            }
            if let Some(s) = seeds {
                config.experiment.seeds.clone_from(s);
            }
            set_epochs(&mut config, *epochs);
        }
    }
    config.normalize();
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    let config = build_config(cli)?;
    std::fs::create_dir_all(&config.output_dir).map_err(|e| GsecError::Io {
        path: config.output_dir.clone(),
        source: e,
    })?;
    let artifacts = match cli.command {
        Command::Synth { .. } => commands::synth(&config)?,
        Command::Semantic { .. } => commands::semantic(&config)?,
        Command::Train { .. } => commands::train(&config)?,
        Command::Eval { .. } => commands::eval(&config)?,
        Command::BiasVariance { .. } => commands::bias_variance_cmd(&config)?,
        Command::Ablate { .. } => commands::ablate(&config)?,
    };
    let manifest = Manifest::build(
        cli.command.name(),
        &config.canonical_json(),
        config.seed,
        &config.output_dir,
        &artifacts,
    )?;
    let path = manifest.write(&config.output_dir)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Process exit status for each error class.
fn exit_code(err: &GsecError) -> u8 {
    match err {
        GsecError::Config(_) => 3,
        GsecError::Format { .. } | GsecError::Corruption { .. } => 4,
        GsecError::Client { .. } | GsecError::ResponseFormat { .. } => 5,
        GsecError::NumericalAbort { .. } => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
