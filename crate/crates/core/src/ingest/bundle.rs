//! Bundle directory persistence: one canonical CSV per source plus a
//! manifest recording resolutions, units, and point coordinates.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::canonical::{parse_canonical, serialize_frame, CanonicalSchema};
use crate::ingest::{GeoPoint, SourceBundle, TARGET_SOURCE};

pub const MANIFEST_FILE: &str = "manifest.json";
const BUNDLE_FORMAT: &str = "tecast-bundle-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestSource {
    pub resolution_s: i64,
    /// (name, unit) pairs in column order.
    pub channels: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub coverage_start: i64,
    pub coverage_end: i64,
    pub sources: BTreeMap<String, ManifestSource>,
    pub target_locations: Vec<GeoPoint>,
    pub gim_points: Vec<GeoPoint>,
    /// Set by `prepare` when frames are already on experiment grids.
    #[serde(default)]
    pub prepared: bool,
}

/// Writes one `<source_id>.csv` per frame plus `manifest.json`.
pub fn save_bundle(bundle: &SourceBundle, dir: &Path) -> Result<()> {
    save_bundle_with(bundle, dir, false)
}

pub fn save_bundle_with(bundle: &SourceBundle, dir: &Path, prepared: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut sources = BTreeMap::new();
    for (id, frame) in bundle.frames() {
        let path = dir.join(format!("{id}.csv"));
        std::fs::write(&path, serialize_frame(frame))?;
        sources.insert(
            id.clone(),
            ManifestSource {
                resolution_s: frame.native_resolution(),
                channels: frame
                    .channels()
                    .iter()
                    .map(|c| (c.name.clone(), c.unit.clone()))
                    .collect(),
            },
        );
    }
    let (coverage_start, coverage_end) = bundle.coverage().unwrap_or((0, 0));
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        coverage_start,
        coverage_end,
        sources,
        target_locations: bundle.target_locations.clone(),
        gim_points: bundle.gim_points.clone(),
        prepared,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<BundleManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::BundleIncomplete(format!(
            "no {MANIFEST_FILE} in {}",
            dir.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    let manifest: BundleManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if manifest.format != BUNDLE_FORMAT {
        return Err(Error::Config(format!(
            "unsupported bundle format '{}'",
            manifest.format
        )));
    }
    Ok(manifest)
}

/// Loads a bundle directory. Unknown extra files are ignored, each leaving a
/// warning record on the returned bundle.
pub fn load_bundle(dir: &Path) -> Result<SourceBundle> {
    let manifest = read_manifest(dir)?;
    if !manifest.sources.contains_key(TARGET_SOURCE) {
        return Err(Error::BundleIncomplete(format!(
            "manifest lists no {TARGET_SOURCE} source"
        )));
    }

    let mut frames = BTreeMap::new();
    for (id, src) in &manifest.sources {
        let path = dir.join(format!("{id}.csv"));
        if !path.exists() {
            return Err(Error::BundleIncomplete(format!(
                "missing {}exected for source '{id}'",
                path.display()
            )));
        }
        let schema = CanonicalSchema {
            source_id: id.clone(),
            channels: src.channels.clone(),
            resolution_s: src.resolution_s,
        };
        frames.insert(id.clone(), parse_canonical(&path, &schema)?);
    }

    let mut bundle = SourceBundle::new(
        frames,
        manifest.target_locations.clone(),
        manifest.gim_points.clone(),
    )?;

    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name == MANIFEST_FILE {
            continue;
        }
        let known = name
            .strip_suffix(".csv")
            .map(|stem| manifest.sources.contains_key(stem))
            .unwrap_or(false);
        if !known {
            bundle
                .warnings
                .push(format!("ignored unknown file '{name}'"));
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synthetic::{generate_synthetic, SyntheticSpec};

    fn tiny_bundle() -> SourceBundle {
        generate_synthetic(&SyntheticSpec {
            span_days: 4,
            longest_lag_s: 86_400,
            omni_resolution_s: 3600,
            target_resolution_s: 3600,
            gim_lat_count: 5,
            gim_lon_count: 6,
            gim_point_count: 3,
            storm_rate_per_year: 30.0,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn save_then_load_round_trips_exactly() {
        let bundle = tiny_bundle();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        for (id, frame) in bundle.frames() {
            assert_eq!(loaded.frame(id).unwrap(), frame, "frame {id}");
        }
        assert_eq!(loaded.target_locations, bundle.target_locations);
        assert_eq!(loaded.gim_points, bundle.gim_points);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn missing_target_file_is_bundle_incomplete() {
        let bundle = tiny_bundle();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("target_vtec.csv")).unwrap();
        let err = load_bundle(dir.path()).unwrap_err();
        assert!(matches!(err, Error::BundleIncomplete(_)), "{err}");
    }

    #[test]
    fn unknown_extra_file_is_ignored_with_warning() {
        let bundle = tiny_bundle();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        std::fs::write(dir.path().join("scratch.txt"), "not a source").unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("scratch.txt"));
    }
}
