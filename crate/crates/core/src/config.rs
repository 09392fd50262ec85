//! Declarative experiment configuration: one file captures one experiment
//! row (per-source lag/resolution toggles, model and training settings,
//! split scheme, seed).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::TransformKind;

/// Per-source toggle: whether the source feeds the encoder and with which
/// history window. When enabled, `lag_s / resolution_s` must equal the
/// experiment's shared step count L.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSpec {
    pub enabled: bool,
    pub lag_s: i64,
    pub resolution_s: i64,
    /// Optional channel subset; defaults to every channel of the source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<String>>,
}

impl SourceSpec {
    pub fn disabled() -> Self {
        SourceSpec {
            enabled: false,
            lag_s: 0,
            resolution_s: 1,
            channels: None,
        }
    }

    pub fn steps(&self) -> i64 {
        if self.resolution_s > 0 {
            self.lag_s / self.resolution_s
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden_size: usize,
    #[serde(default = "default_heads")]
    pub attention_heads: usize,
    #[serde(default = "default_lstm_layers")]
    pub lstm_layers: usize,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default = "default_targets")]
    pub output_targets: usize,
}

fn default_hidden() -> usize {
    64
}
fn default_heads() -> usize {
    2
}
fn default_lstm_layers() -> usize {
    2
}
fn default_dropout() -> f64 {
    0.1
}
fn default_quantiles() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}
fn default_targets() -> usize {
    2
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_size: default_hidden(),
            attention_heads: default_heads(),
            lstm_layers: default_lstm_layers(),
            dropout_rate: default_dropout(),
            quantiles: default_quantiles(),
            output_targets: default_targets(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.hidden_size % self.attention_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_size {} must be a positive multiple of attention_heads {}",
                self.hidden_size, self.attention_heads
            )));
        }
        if self.lstm_layers == 0 {
            return Err(Error::Config("lstm_layers must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1)".into()));
        }
        if self.quantiles.is_empty()
            || self
                .quantiles
                .windows(2)
                .any(|w| w[0] >= w[1])
            || self.quantiles.iter().any(|q| !(0.0 < *q && *q < 1.0))
        {
            return Err(Error::Config(
                "quantiles must be strictly increasing within (0, 1)".into(),
            ));
        }
        if !self.quantiles.iter().any(|&q| q == 0.5) {
            return Err(Error::Config("quantiles must include the median 0.5".into()));
        }
        if self.output_targets == 0 {
            return Err(Error::Config("output_targets must be >= 1".into()));
        }
        Ok(())
    }

    /// Index of the median quantile (guaranteed present by validation).
    pub fn median_index(&self) -> usize {
        self.quantiles.iter().position(|&q| q == 0.5).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_clip")]
    pub grad_clip_norm: f64,
}

fn default_optimizer() -> String {
    "adam".into()
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    64
}
fn default_epochs() -> usize {
    20
}
fn default_patience() -> usize {
    5
}
fn default_clip() -> f64 {
    1.0
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            optimizer: default_optimizer(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            grad_clip_norm: default_clip(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.optimizer != "adam" {
            return Err(Error::Config(format!(
                "unknown optimizer '{}' (supported: adam)",
                self.optimizer
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.grad_clip_norm <= 0.0 {
            return Err(Error::Config("grad_clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub anchor_year: i32,
    /// Informational target fractions; the monthly rotation realizes the
    /// closest month-granular approximation.
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
}

fn default_scheme() -> String {
    "monthly-rotation".into()
}
fn default_fractions() -> Vec<f64> {
    vec![0.8, 0.1, 0.1]
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scheme != "monthly-rotation" {
            return Err(Error::Config(format!(
                "unknown split scheme '{}' (supported: monthly-rotation)",
                self.scheme
            )));
        }
        Ok(())
    }
}

/// One experiment row: sources, window geometry, model, training, split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Shared encoder step count L across all enabled sources.
    pub encoder_steps: usize,
    /// Forecast steps H on the horizon grid.
    pub horizon_steps: usize,
    #[serde(default = "default_hres")]
    pub horizon_resolution_s: i64,
    /// Candidate origins are every `origin_stride`-th point of the horizon
    /// grid (desk-scale thinning; 1 keeps every origin).
    #[serde(default = "default_stride")]
    pub origin_stride: usize,
    /// Forward-fill limit, in steps, applied after resampling.
    #[serde(default = "default_max_gap")]
    pub max_gap_steps: usize,
    pub sources: BTreeMap<String, SourceSpec>,
    /// Per-channel transform overrides; vtec_* channels default to
    /// log-standardize, everything else to standardize.
    #[serde(default)]
    pub normalization: BTreeMap<String, TransformKind>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    pub split: SplitConfig,
}

fn default_hres() -> i64 {
    3600
}
fn default_stride() -> usize {
    1
}
fn default_max_gap() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_steps == 0 || self.horizon_steps == 0 {
            return Err(Error::Config(
                "encoder_steps and horizon_steps must be >= 1".into(),
            ));
        }
        if self.horizon_resolution_s <= 0 {
            return Err(Error::Config("horizon_resolution_s must be positive".into()));
        }
        if self.horizon_steps as i64 * self.horizon_resolution_s > 86_400 {
            return Err(Error::Config(
                "forecast horizon must not exceed 24 hours".into(),
            ));
        }
        if self.origin_stride == 0 {
            return Err(Error::Config("origin_stride must be >= 1".into()));
        }
        for (id, src) in &self.sources {
            if !src.enabled {
                continue;
            }
            if src.resolution_s <= 0 || src.lag_s <= 0 || src.lag_s % src.resolution_s != 0 {
                return Err(Error::Config(format!(
                    "source '{id}': lag {} must be a positive multiple of resolution {}",
                    src.lag_s, src.resolution_s
                )));
            }
            if src.steps() != self.encoder_steps as i64 {
                return Err(Error::Config(format!(
                    "source '{id}': lag/resolution = {} steps, but the experiment uses L = {}",
                    src.steps(),
                    self.encoder_steps
                )));
            }
        }
        if !self.sources.values().any(|s| s.enabled) {
            return Err(Error::Config("at least one source must be enabled".into()));
        }
        self.model.validate()?;
        self.training.validate()?;
        self.split.validate()?;
        Ok(())
    }

    pub fn enabled_sources(&self) -> impl Iterator<Item = (&String, &SourceSpec)> {
        self.sources.iter().filter(|(_, s)| s.enabled)
    }

    /// Finest resolution among enabled sources (drives encoder clock steps).
    pub fn finest_resolution_s(&self) -> i64 {
        self.enabled_sources()
            .map(|(_, s)| s.resolution_s)
            .min()
            .unwrap_or(self.horizon_resolution_s)
    }

    /// Transform for one channel: explicit override, else log-standardize
    /// for vtec channels, else standardize.
    pub fn transform_for(&self, channel: &str) -> TransformKind {
        if let Some(kind) = self.normalization.get(channel) {
            return *kind;
        }
        if channel.starts_with("vtec_") {
            TransformKind::LogStandardize
        } else {
            TransformKind::Standardize
        }
    }
}
