//! Run configuration: a TOML file whose sections mirror the library configs.
//! Every key is optional; command-line flags override the file, and the file
//! overrides library defaults.

use std::path::{Path, PathBuf};

use focusfuse::dataset::{Augmentation, CorpusConfig};
use focusfuse::metrics::MetricConfig;
use focusfuse::pipeline::PipelineConfig;
use focusfuse::training::TrainConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub fuse: FuseSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub samples_per_pair: Option<usize>,
    pub patch_size: Option<usize>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    /// `full`, `swap` or `none`.
    pub augmentation: Option<String>,
    pub half_resize: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// `initial`, `boundary` or `both`.
    pub target: Option<String>,
    pub blocks_per_stage: Option<usize>,
    pub patch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub decay_epochs: Option<Vec<usize>>,
    pub decay_factor: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub holdout_fraction: Option<f64>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub norm_momentum: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub patch_size: Option<usize>,
    pub window_half: Option<usize>,
    pub band_low: Option<f64>,
    pub band_high: Option<f64>,
    pub threshold: Option<f64>,
    pub min_region_fraction: Option<f64>,
    pub stride: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuseSection {
    /// `classical` or `network`.
    pub scorer: Option<String>,
    /// `sml` or `variance`.
    pub measure: Option<String>,
    pub boundary_patch_size: Option<usize>,
    pub initial_checkpoint: Option<PathBuf>,
    pub boundary_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub bins: Option<usize>,
    pub yang_window: Option<usize>,
    pub yang_threshold: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

pub fn parse_augmentation(name: &str) -> Result<Augmentation, CliError> {
    match name {
        "full" => Ok(Augmentation::full()),
        "swap" => Ok(Augmentation::swap_only()),
        "none" => Ok(Augmentation::none()),
        other => Err(CliError::Usage(format!("unknown augmentation `{other}` (expected full, swap or none)"))),
    }
}

/// Command-line values for the dataset section.
#[derive(Debug, Default, Clone)]
pub struct DatasetFlags {
    pub samples_per_pair: Option<usize>,
    pub patch_size: Option<usize>,
    pub augmentation: Option<String>,
}

pub fn corpus_config(file: &DatasetSection, flags: &DatasetFlags) -> Result<CorpusConfig, CliError> {
    let d = CorpusConfig::default();
    let augmentation = match flags.augmentation.as_ref().or(file.augmentation.as_ref()) {
        Some(name) => parse_augmentation(name)?,
        None => d.augmentation,
    };
    let cfg = CorpusConfig {
        samples_per_pair: flags.samples_per_pair.or(file.samples_per_pair).unwrap_or(d.samples_per_pair),
        patch_size: flags.patch_size.or(file.patch_size).unwrap_or(d.patch_size),
        sigma_range: (file.sigma_min.unwrap_or(d.sigma_range.0), file.sigma_max.unwrap_or(d.sigma_range.1)),
        augmentation,
        half_resize: file.half_resize.unwrap_or(d.half_resize),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Default, Clone)]
pub struct TrainFlags {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub blocks_per_stage: Option<usize>,
    pub patch_size: Option<usize>,
}

pub fn train_config(file: &TrainSection, flags: &TrainFlags, seed: u64) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let epochs = flags.epochs.or(file.epochs).unwrap_or(d.epochs);
    // the default schedule belongs to the default run length
    let decay_epochs = match &file.decay_epochs {
        Some(v) => v.clone(),
        None if epochs == d.epochs => d.decay_epochs.clone(),
        None => d.decay_epochs.iter().map(|&e| e * epochs / d.epochs).filter(|&e| e > 0 && e < epochs).collect(),
    };
    let mut decay_epochs = decay_epochs;
    decay_epochs.dedup();
    let cfg = TrainConfig {
        learning_rate: flags.learning_rate.or(file.learning_rate).unwrap_or(d.learning_rate),
        decay_epochs,
        decay_factor: file.decay_factor.unwrap_or(d.decay_factor),
        epochs,
        batch_size: flags.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        holdout_fraction: file.holdout_fraction.unwrap_or(d.holdout_fraction),
        seed,
        momentum: file.momentum.unwrap_or(d.momentum),
        weight_decay: file.weight_decay.unwrap_or(d.weight_decay),
        norm_momentum: file.norm_momentum.unwrap_or(d.norm_momentum),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Default, Clone)]
pub struct PipelineFlags {
    pub patch_size: Option<usize>,
    pub window_half: Option<usize>,
    pub stride: Option<usize>,
    pub threshold: Option<f64>,
}

pub fn pipeline_config(file: &PipelineSection, flags: &PipelineFlags) -> Result<PipelineConfig, CliError> {
    let d = PipelineConfig::default();
    let cfg = PipelineConfig {
        patch_size: flags.patch_size.or(file.patch_size).unwrap_or(d.patch_size),
        window_half: flags.window_half.or(file.window_half).unwrap_or(d.window_half),
        band_low: file.band_low.unwrap_or(d.band_low),
        band_high: file.band_high.unwrap_or(d.band_high),
        threshold: flags.threshold.or(file.threshold).unwrap_or(d.threshold),
        min_region_fraction: file.min_region_fraction.unwrap_or(d.min_region_fraction),
        stride: flags.stride.or(file.stride).unwrap_or(d.stride),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn metric_config(file: &MetricsSection) -> Result<MetricConfig, CliError> {
    let mut cfg = MetricConfig::default();
    if let Some(bins) = file.bins {
        cfg.bins = bins;
    }
    if let Some(w) = file.yang_window {
        cfg.yang.window = w;
    }
    if let Some(t) = file.yang_threshold {
        cfg.yang.similarity_threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}
