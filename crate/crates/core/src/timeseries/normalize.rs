//! Reversible per-channel normalization.
//!
//! Channels are either standardized directly or log-standardized
//! (`ln(x + epsilon)` then standardized) for skewed positive quantities such
//! as vTEC. Statistics use the n-1 (sample) denominator and are meant to be
//! fitted on training-split data only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesFrame;

/// Log offset for vTEC-like channels: keeps near-zero nighttime values
/// finite while perturbing typical 5-50 TECU values negligibly.
pub const LOG_OFFSET_TECU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Standardize,
    LogStandardize,
}

/// Fitted statistics for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub kind: TransformKind,
    pub mean: f64,
    pub std: f64,
    pub epsilon: f64,
}

impl ChannelStats {
    pub fn fit(name: &str, values: &[f64], kind: TransformKind) -> Result<ChannelStats> {
        let epsilon = match kind {
            TransformKind::Standardize => 0.0,
            TransformKind::LogStandardize => LOG_OFFSET_TECU,
        };
        let transformed: Vec<f64> = values
            .iter()
            .filter(|v| v.is_finite())
            .map(|&v| match kind {
                TransformKind::Standardize => Ok(v),
                TransformKind::LogStandardize => {
                    if v + epsilon <= 0.0 {
                        Err(Error::DegenerateChannel {
                            channel: name.to_string(),
                            reason: format!("value {v} is not log-transformable with offset {epsilon}"),
                        })
                    } else {
                        Ok((v + epsilon).ln())
                    }
                }
            })
            .collect::<Result<_>>()?;
        if transformed.len() < 2 {
            return Err(Error::DegenerateChannel {
                channel: name.to_string(),
                reason: format!("needs at least 2 finite values, found {}", transformed.len()),
            });
        }
        let n = transformed.len() as f64;
        let mean = transformed.iter().sum::<f64>() / n;
        let var = transformed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        if std <= 0.0 || !std.is_finite() {
            return Err(Error::DegenerateChannel {
                channel: name.to_string(),
                reason: "zero variance".into(),
            });
        }
        Ok(ChannelStats {
            kind,
            mean,
            std,
            epsilon,
        })
    }

    pub fn apply_one(&self, x: f64) -> f64 {
        let f = match self.kind {
            TransformKind::Standardize => x,
            TransformKind::LogStandardize => (x + self.epsilon).ln(),
        };
        (f - self.mean) / self.std
    }

    pub fn invert_one(&self, z: f64) -> f64 {
        let f = z * self.std + self.mean;
        match self.kind {
            TransformKind::Standardize => f,
            TransformKind::LogStandardize => f.exp() - self.epsilon,
        }
    }
}

/// Per-channel fitted statistics keyed by channel name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub channels: BTreeMap<String, ChannelStats>,
}

impl NormalizationStats {
    pub fn get(&self, channel: &str) -> Option<&ChannelStats> {
        self.channels.get(channel)
    }

    pub fn insert(&mut self, channel: impl Into<String>, stats: ChannelStats) {
        self.channels.insert(channel.into(), stats);
    }

    pub fn merge(&mut self, other: NormalizationStats) {
        self.channels.extend(other.channels);
    }
}

/// Fits statistics for every channel of `frame`, choosing the transform via
/// `kind_for`.
pub fn fit_normalizer(
    frame: &TimeSeriesFrame,
    kind_for: impl Fn(&str) -> TransformKind,
) -> Result<NormalizationStats> {
    fit_normalizer_where(frame, kind_for, |_| true)
}

/// Like [`fit_normalizer`], restricted to timestamps accepted by `keep`
/// (used to fit on the training split only).
pub fn fit_normalizer_where(
    frame: &TimeSeriesFrame,
    kind_for: impl Fn(&str) -> TransformKind,
    keep: impl Fn(i64) -> bool,
) -> Result<NormalizationStats> {
    let mask: Vec<bool> = frame.timestamps().iter().map(|&t| keep(t)).collect();
    let mut stats = NormalizationStats::default();
    for ch in frame.channels() {
        let values: Vec<f64> = ch
            .values
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .collect();
        let fitted = ChannelStats::fit(&ch.name, &values, kind_for(&ch.name))?;
        stats.insert(ch.name.clone(), fitted);
    }
    Ok(stats)
}

/// Normalized copy of `values`; NaN (missing) propagates unchanged.
pub fn apply_normalizer(values: &[f64], stats: &ChannelStats) -> Vec<f64> {
    values
        .iter()
        .map(|&v| if v.is_finite() { stats.apply_one(v) } else { v })
        .collect()
}

/// Exact inverse of [`apply_normalizer`].
pub fn invert_normalizer(values: &[f64], stats: &ChannelStats) -> Vec<f64> {
    values
        .iter()
        .map(|&v| if v.is_finite() { stats.invert_one(v) } else { v })
        .collect()
}
