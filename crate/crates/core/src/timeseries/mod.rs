//! Resolution-aware time-series containers and alignment primitives.
//!
//! Frames hold one source's channels on a uniform grid (gaps allowed as
//! grid-aligned holes, values marked missing with NaN). All operations are
//! pure functions over immutable inputs.

mod normalize;

pub use normalize::{
    apply_normalizer, fit_normalizer, fit_normalizer_where, invert_normalizer, ChannelStats,
    NormalizationStats, TransformKind, LOG_OFFSET_TECU,
};

use crate::error::{Error, Result};

/// One named channel of a frame. Missing values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

/// Timestamped multi-channel series from one source at a native resolution.
///
/// Invariants enforced at construction: timestamps strictly increasing with
/// gaps that are integer multiples of the native resolution, and every
/// channel as long as the timestamp vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    source_id: String,
    timestamps: Vec<i64>,
    channels: Vec<Channel>,
    native_resolution: i64,
}

impl TimeSeriesFrame {
    pub fn new(
        source_id: impl Into<String>,
        timestamps: Vec<i64>,
        channels: Vec<Channel>,
        native_resolution: i64,
    ) -> Result<Self> {
        let source_id = source_id.into();
        if native_resolution <= 0 {
            return Err(Error::invalid_argument(format!(
                "native resolution must be positive, got {native_resolution}"
            )));
        }
        for pair in timestamps.windows(2) {
            let gap = pair[1] - pair[0];
            if gap <= 0 {
                return Err(Error::invalid_argument(format!(
                    "timestamps must be strictly increasing ({} then {})",
                    pair[0], pair[1]
                )));
            }
            if gap % native_resolution != 0 {
                return Err(Error::invalid_argument(format!(
                    "timestamp gap {gap} is not a multiple of resolution {native_resolution}"
                )));
            }
        }
        for ch in &channels {
            if ch.values.len() != timestamps.len() {
                return Err(Error::invalid_argument(format!(
                    "channel '{}' has {} values for {} timestamps",
                    ch.name,
                    ch.values.len(),
                    timestamps.len()
                )));
            }
        }
        Ok(TimeSeriesFrame {
            source_id,
            timestamps,
            channels,
            native_resolution,
        })
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn native_resolution(&self) -> i64 {
        self.native_resolution
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn channel_names(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn start(&self) -> Option<i64> {
        self.timestamps.first().copied()
    }

    pub fn end(&self) -> Option<i64> {
        self.timestamps.last().copied()
    }

    /// Value of a channel at an exact grid timestamp, if present.
    pub fn value_at(&self, channel: &str, ts: i64) -> Option<f64> {
        let ch = self.channel(channel)?;
        let idx = self.timestamps.binary_search(&ts).ok()?;
        Some(ch.values[idx])
    }

    /// Re-grids the frame to `target_resolution` seconds.
    ///
    /// Coarser targets average the finite values in each half-open bin
    /// `[t, t + target)`; bins without finite input become missing. Finer
    /// targets forward-fill from the most recent input. Output timestamps
    /// are aligned to multiples of the target resolution and contiguous.
    pub fn resample(&self, target_resolution: i64) -> Result<TimeSeriesFrame> {
        if target_resolution <= 0 {
            return Err(Error::invalid_argument(format!(
                "target resolution must be positive, got {target_resolution}"
            )));
        }
        if self.is_empty() {
            return Err(Error::EmptyInput(format!(
                "cannot resample empty frame '{}'",
                self.source_id
            )));
        }
        if target_resolution >= self.native_resolution {
            self.downsample(target_resolution)
        } else {
            self.upsample(target_resolution)
        }
    }

    fn downsample(&self, target: i64) -> Result<TimeSeriesFrame> {
        let first_bin = self.timestamps[0].div_euclid(target);
        let last_bin = self.timestamps[self.len() - 1].div_euclid(target);
        let nbins = (last_bin - first_bin + 1) as usize;
        let nch = self.channels.len();

        let mut sums = vec![0.0; nbins * nch];
        let mut counts = vec![0u32; nbins * nch];
        for (i, &ts) in self.timestamps.iter().enumerate() {
            let bin = (ts.div_euclid(target) - first_bin) as usize;
            for (c, ch) in self.channels.iter().enumerate() {
                let v = ch.values[i];
                if v.is_finite() {
                    sums[bin * nch + c] += v;
                    counts[bin * nch + c] += 1;
                }
            }
        }

        let timestamps: Vec<i64> = (0..nbins as i64).map(|b| (first_bin + b) * target).collect();
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(c, ch)| Channel {
                name: ch.name.clone(),
                unit: ch.unit.clone(),
                values: (0..nbins)
                    .map(|b| {
                        let n = counts[b * nch + c];
                        if n == 0 {
                            f64::NAN
                        } else {
                            sums[b * nch + c] / n as f64
                        }
                    })
                    .collect(),
            })
            .collect();
        TimeSeriesFrame::new(self.source_id.clone(), timestamps, channels, target)
    }

    fn upsample(&self, target: i64) -> Result<TimeSeriesFrame> {
        let first = self.timestamps[0];
        let last = self.timestamps[self.len() - 1];
        // cover each input's validity window [t, t + native)
        let start = first.div_euclid(target) * target
            + if first.rem_euclid(target) == 0 { 0 } else { target };
        let end = last + self.native_resolution - target;
        if start > end {
            return Err(Error::invalid_argument(format!(
                "upsampling to {target} s produces no aligned timestamps"
            )));
        }
        let n = ((end - start) / target + 1) as usize;
        let mut timestamps = Vec::with_capacity(n);
        let mut src = 0usize;
        let mut indices = Vec::with_capacity(n);
        for k in 0..n {
            let t = start + k as i64 * target;
            while src + 1 < self.len() && self.timestamps[src + 1] <= t {
                src += 1;
            }
            timestamps.push(t);
            indices.push(src);
        }
        let channels = self
            .channels
            .iter()
            .map(|ch| Channel {
                name: ch.name.clone(),
                unit: ch.unit.clone(),
                values: indices.iter().map(|&i| ch.values[i]).collect(),
            })
            .collect();
        TimeSeriesFrame::new(self.source_id.clone(), timestamps, channels, target)
    }

    /// Extracts the most recent `lag / resolution` samples ending at (and
    /// including) `origin`. Row 0 is the oldest step; columns follow the
    /// frame's channel order. The frame must already be on the requested
    /// resolution grid.
    pub fn align_window(&self, origin: i64, lag: i64, resolution: i64) -> Result<Vec<Vec<f64>>> {
        if resolution <= 0 || lag <= 0 || lag % resolution != 0 {
            return Err(Error::invalid_argument(format!(
                "lag {lag} must be a positive multiple of resolution {resolution}"
            )));
        }
        if self.native_resolution != resolution {
            return Err(Error::invalid_argument(format!(
                "frame '{}' is on a {} s grid, expected {} s; resample first",
                self.source_id, self.native_resolution, resolution
            )));
        }
        let Some(frame_start) = self.start() else {
            return Err(Error::EmptyInput(format!("frame '{}' is empty", self.source_id)));
        };
        let steps = (lag / resolution) as usize;
        let window_start = origin - lag + resolution;
        if (origin - frame_start).rem_euclid(resolution) != 0 {
            return Err(Error::invalid_argument(format!(
                "origin {origin} is not aligned to the {} s grid of '{}'",
                resolution, self.source_id
            )));
        }
        if window_start < frame_start {
            return Err(Error::InsufficientHistory {
                requested_start: window_start,
                origin,
                frame_start,
                earliest_origin: frame_start + lag - resolution,
            });
        }
        let frame_end = self.end().unwrap();
        if origin > frame_end {
            return Err(Error::invalid_argument(format!(
                "origin {origin} is beyond the end of '{}' ({frame_end})",
                self.source_id
            )));
        }
        let mut rows = Vec::with_capacity(steps);
        for s in 0..steps {
            let t = window_start + s as i64 * resolution;
            let idx = ((t - frame_start) / resolution) as usize;
            // contiguous grid is guaranteed post-resample; gaps hold NaN
            debug_assert_eq!(self.timestamps[idx], t);
            rows.push(self.channels.iter().map(|ch| ch.values[idx]).collect());
        }
        Ok(rows)
    }

    /// Forward-fills missing runs of at most `max_gap` consecutive steps.
    /// Longer runs and leading missing values are left as-is.
    pub fn impute(&self, max_gap: usize) -> TimeSeriesFrame {
        let channels = self
            .channels
            .iter()
            .map(|ch| {
                let mut values = ch.values.clone();
                let mut i = 0;
                while i < values.len() {
                    if values[i].is_finite() {
                        i += 1;
                        continue;
                    }
                    let run_start = i;
                    while i < values.len() && !values[i].is_finite() {
                        i += 1;
                    }
                    let run_len = i - run_start;
                    if run_start > 0 && run_len <= max_gap {
                        let fill = values[run_start - 1];
                        for v in &mut values[run_start..i] {
                            *v = fill;
                        }
                    }
                }
                Channel {
                    name: ch.name.clone(),
                    unit: ch.unit.clone(),
                    values,
                }
            })
            .collect();
        TimeSeriesFrame {
            source_id: self.source_id.clone(),
            timestamps: self.timestamps.clone(),
            channels,
            native_resolution: self.native_resolution,
        }
    }
}

/// Seconds past midnight UTC.
pub fn seconds_in_day(ts: i64) -> f64 {
    ts.rem_euclid(86_400) as f64
}

/// Zero-based day of year plus the fractional day, continuous across
/// midnight.
pub fn fractional_day_of_year(ts: i64) -> f64 {
    use chrono::{Datelike, TimeZone, Utc};
    let dt = Utc.timestamp_opt(ts, 0).unwrap();
    dt.ordinal0() as f64 + seconds_in_day(ts) / 86_400.0
}

/// Sine/cosine pair for a cyclical quantity with the given period.
pub fn encode_cyclical(value: f64, period: f64) -> Result<(f64, f64)> {
    if period <= 0.0 {
        return Err(Error::invalid_argument(format!(
            "cyclical period must be positive, got {period}"
        )));
    }
    let phase = 2.0 * std::f64::consts::PI * value / period;
    Ok((phase.sin(), phase.cos()))
}
