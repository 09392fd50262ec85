//! Sample-set construction: monthly-rotation splits, evaluation binning,
//! and assembly of normalized model inputs from an aligned bundle.

mod bins;
mod samples;
mod splits;

pub use bins::{ap_bin, f107_bin, latitude_band, ApBin, F107Bin, LatitudeBand};
pub use samples::{
    build_samples, prepare, FeatureLayout, PreparedBundle, Sample, SampleMeta, SkipStats,
    DOY_PERIOD, LON_PERIOD, SID_PERIOD,
};
pub use splits::{make_splits, role_of_month, Role, SplitTable};

// configuration types live in `crate::config`; re-exported here because the
// dataset owns their semantics
pub use crate::config::{ExperimentConfig, SourceSpec, SplitConfig};
