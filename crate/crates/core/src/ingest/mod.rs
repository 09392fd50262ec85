//! Source ingestion: canonical on-disk parsing, GIM subsampling, synthetic
//! bundle generation, and bundle persistence.

mod bundle;
mod canonical;
mod gim;
mod synthetic;

pub use bundle::{load_bundle, save_bundle, BundleManifest};
pub use canonical::{parse_canonical, parse_canonical_str, serialize_frame, CanonicalSchema};
pub use gim::{fibonacci_lattice, subsample_gim, GimGrid};
pub use synthetic::{generate_synthetic, StormBurst, SyntheticSpec};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesFrame;

/// The eight canonical source identifiers.
pub const SOURCE_IDS: [&str; 8] = [
    "omni_indices",
    "omni_solar_wind",
    "omni_magnetic_field",
    "ap_index",
    "solar_proxies",
    "timed_see_l3",
    "jpl_gim",
    "target_vtec",
];

pub const TARGET_SOURCE: &str = "target_vtec";

/// Geographic point in degrees, longitude in [-180, 180).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Channel names of the target frame for location index `i`.
pub fn target_channel_names(i: usize) -> (String, String) {
    (format!("vtec_mean_p{i}"), format!("vtec_std_p{i}"))
}

/// All source frames plus metadata needed to interpret them.
#[derive(Debug, Clone, Default)]
pub struct SourceBundle {
    frames: BTreeMap<String, TimeSeriesFrame>,
    /// Fixed locations of the target vTEC cells; index `i` pairs with the
    /// `vtec_mean_p{i}` / `vtec_std_p{i}` channels.
    pub target_locations: Vec<GeoPoint>,
    /// Snapped lattice points behind the `gim_p*` channels.
    pub gim_points: Vec<GeoPoint>,
    /// Non-fatal observations collected while loading.
    pub warnings: Vec<String>,
}

impl SourceBundle {
    pub fn new(
        frames: BTreeMap<String, TimeSeriesFrame>,
        target_locations: Vec<GeoPoint>,
        gim_points: Vec<GeoPoint>,
    ) -> Result<Self> {
        let bundle = SourceBundle {
            frames,
            target_locations,
            gim_points,
            warnings: Vec::new(),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    fn validate(&self) -> Result<()> {
        let target = self
            .frames
            .get(TARGET_SOURCE)
            .ok_or_else(|| Error::BundleIncomplete("target_vtec frame is missing".into()))?;
        if self.target_locations.is_empty() {
            return Err(Error::BundleIncomplete(
                "no target locations recorded".into(),
            ));
        }
        for i in 0..self.target_locations.len() {
            let (mean, std) = target_channel_names(i);
            for name in [&mean, &std] {
                if target.channel(name).is_none() {
                    return Err(Error::BundleIncomplete(format!(
                        "target_vtec frame lacks channel '{name}'"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn frames(&self) -> &BTreeMap<String, TimeSeriesFrame> {
        &self.frames
    }

    pub fn frame(&self, source_id: &str) -> Option<&TimeSeriesFrame> {
        self.frames.get(source_id)
    }

    pub fn target_frame(&self) -> &TimeSeriesFrame {
        &self.frames[TARGET_SOURCE]
    }

    /// Overall [start, end] span across all frames.
    pub fn coverage(&self) -> Option<(i64, i64)> {
        let starts = self.frames.values().filter_map(TimeSeriesFrame::start);
        let ends = self.frames.values().filter_map(TimeSeriesFrame::end);
        match (starts.min(), ends.max()) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }

    /// Replaces one frame (used when re-gridding during preparation).
    pub fn replace_frame(&mut self, source_id: &str, frame: TimeSeriesFrame) {
        self.frames.insert(source_id.to_string(), frame);
    }
}
