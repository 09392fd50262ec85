//! Self-describing model checkpoints: config echo, named parameter
//! tensors, normalizer statistics, feature layout, and seed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::ExperimentConfig;
use crate::dataset::FeatureLayout;
use crate::error::{Error, Result};
use crate::ingest::GeoPoint;
use crate::tft::model::TftModel;
use crate::tft::params::ParameterSet;
use crate::timeseries::{ChannelStats, NormalizationStats};

const CHECKPOINT_FORMAT: &str = "tecast-checkpoint-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major doubles.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ExperimentConfig,
    pub layout: FeatureLayout,
    pub stats: NormalizationStats,
    pub lat_stats: ChannelStats,
    pub locations: Vec<GeoPoint>,
    pub seed: u64,
    pub params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn new(
        config: &ExperimentConfig,
        layout: &FeatureLayout,
        stats: &NormalizationStats,
        lat_stats: &ChannelStats,
        locations: &[GeoPoint],
        params: &ParameterSet,
    ) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: config.clone(),
            layout: layout.clone(),
            stats: stats.clone(),
            lat_stats: lat_stats.clone(),
            locations: locations.to_vec(),
            seed: config.seed,
            params: params
                .entries()
                .iter()
                .map(|(name, t)| ParamEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Config(format!("checkpoint serialization failed: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Loads and validates a checkpoint: the stored parameters must match
    /// the shapes the stored configuration derives, name by name.
    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::CheckpointMismatch(format!(
                "unsupported format '{}'",
                ckpt.format
            )));
        }
        ckpt.config.validate()?;
        ckpt.validate_shapes()?;
        Ok(ckpt)
    }

    pub fn validate_shapes(&self) -> Result<()> {
        let model = self.model()?;
        let expected = model.init_params(0);
        if expected.len() != self.params.len() {
            return Err(Error::CheckpointMismatch(format!(
                "config derives {} parameters, checkpoint stores {}",
                expected.len(),
                self.params.len()
            )));
        }
        for ((name, tensor), entry) in expected.entries().iter().zip(&self.params) {
            if *name != entry.name {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter order mismatch: expected '{name}', found '{}'",
                    entry.name
                )));
            }
            if tensor.shape() != entry.shape.as_slice() {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter '{name}': config derives shape {:?}, checkpoint stores {:?}",
                    tensor.shape(),
                    entry.shape
                )));
            }
            if entry.data.len() != entry.shape.iter().product::<usize>() {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter '{name}': data length does not match its shape"
                )));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<TftModel> {
        TftModel::new(
            &self.config.model,
            self.config.encoder_steps,
            self.config.horizon_steps,
            &self.layout,
        )
    }

    pub fn parameter_set(&self) -> Result<ParameterSet> {
        let mut params = ParameterSet::default();
        for entry in &self.params {
            params.insert(
                entry.name.clone(),
                Tensor::new(entry.shape.clone(), entry.data.clone())?,
            );
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{SourceSpec, SplitConfig};
    use crate::dataset::FeatureLayout;
    use std::collections::BTreeMap;

    fn tiny_config() -> ExperimentConfig {
        let mut sources = BTreeMap::new();
        sources.insert(
            "ap_index".to_string(),
            SourceSpec {
                enabled: true,
                lag_s: 8 * 86_400,
                resolution_s: 86_400,
                channels: None,
            },
        );
        ExperimentConfig {
            name: "tiny".into(),
            seed: 3,
            encoder_steps: 8,
            horizon_steps: 2,
            horizon_resolution_s: 3600,
            origin_stride: 1,
            max_gap_steps: 3,
            sources,
            normalization: BTreeMap::new(),
            model: crate::config::ModelConfig {
                hidden_size: 8,
                attention_heads: 2,
                lstm_layers: 1,
                ..Default::default()
            },
            training: Default::default(),
            split: SplitConfig {
                scheme: "monthly-rotation".into(),
                anchor_year: 2014,
                fractions: vec![0.8, 0.1, 0.1],
            },
        }
    }

    fn tiny_layout() -> FeatureLayout {
        FeatureLayout {
            static_names: vec!["latitude".into(), "longitude_sin".into()],
            encoder_names: vec!["ap_index:ap".into(), "clock:sid_sin".into()],
            decoder_names: vec!["clock:sid_sin".into(), "clock:sid_cos".into()],
        }
    }

    #[test]
    fn checkpoint_round_trips_parameters_exactly() {
        let config = tiny_config();
        let layout = tiny_layout();
        let model = TftModel::new(&config.model, 8, 2, &layout).unwrap();
        let params = model.init_params(config.seed);
        let ckpt = Checkpoint::new(
            &config,
            &layout,
            &Default::default(),
            &crate::timeseries::ChannelStats {
                kind: crate::timeseries::TransformKind::Standardize,
                mean: 0.0,
                std: 1.0,
                epsilon: 0.0,
            },
            &[],
            &params,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let back = loaded.parameter_set().unwrap();
        assert_eq!(back.entries(), params.entries());
    }

    #[test]
    fn mismatched_config_fails_loudly() {
        let config = tiny_config();
        let layout = tiny_layout();
        let model = TftModel::new(&config.model, 8, 2, &layout).unwrap();
        let params = model.init_params(config.seed);
        let mut ckpt = Checkpoint::new(
            &config,
            &layout,
            &Default::default(),
            &crate::timeseries::ChannelStats {
                kind: crate::timeseries::TransformKind::Standardize,
                mean: 0.0,
                std: 1.0,
                epsilon: 0.0,
            },
            &[],
            &params,
        );
        ckpt.config.model.hidden_size = 16; // stored tensors no longer match
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ckpt.save(&path).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(matches!(err, Error::CheckpointMismatch(_)), "{err}");
    }
}
