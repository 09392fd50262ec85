//! Seeded synthetic multi-source bundles with planted driver -> target
//! structure, for desk-scale verification of the whole pipeline.
//!
//! All channels derive from a small set of documented closed forms (below).
//! One channel (`p_noise` in solar_proxies) is pure noise, planted so that
//! variable-selection sanity checks have a known loser.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ingest::gim::{subsample_gim, GimGrid};
use crate::ingest::{target_channel_names, GeoPoint, SourceBundle};
use crate::timeseries::{Channel, TimeSeriesFrame};

/// One geomagnetic storm: an exponential ap burst starting at `start_ts`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StormBurst {
    pub start_ts: i64,
    pub amplitude: f64,
    pub decay_s: i64,
}

/// Declarative description of one synthetic bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Bundle start, seconds since epoch, midnight UTC.
    pub start_ts: i64,
    pub span_days: u32,
    /// Target cells; channel suffix p{i} refers to locations[i].
    pub locations: Vec<GeoPoint>,
    pub omni_resolution_s: i64,
    pub gim_resolution_s: i64,
    pub target_resolution_s: i64,
    /// Scales the solar envelope modulation terms; must stay in [0, 1.8]
    /// so the envelope remains positive.
    pub driver_amplitude: f64,
    /// Lag between the solar envelope and the target's response.
    pub driver_delay_s: i64,
    pub storm_rate_per_year: f64,
    /// Depletion depth at ap = 300; must stay in [0, 0.9].
    pub storm_depth: f64,
    /// Lag between an ap burst and the vTEC depletion it causes.
    pub storm_delay_s: i64,
    /// Overrides random storm drawing when set.
    pub explicit_storms: Option<Vec<StormBurst>>,
    /// Relative noise on the target channels.
    pub target_noise: f64,
    /// Relative noise on irradiance-derived channels.
    pub driver_noise: f64,
    /// Noise scale on OMNI channels.
    pub omni_noise: f64,
    /// Span validation: the bundle must cover at least twice this lag.
    pub longest_lag_s: i64,
    pub gim_lat_count: usize,
    pub gim_lon_count: usize,
    pub gim_point_count: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 42,
            start_ts: 1_388_534_400, // 2014-01-01T00:00:00Z
            span_days: 730,
            locations: vec![
                GeoPoint { lat: 15.0, lon: -45.0 },
                GeoPoint { lat: 42.5, lon: 12.5 },
                GeoPoint { lat: 67.5, lon: 120.0 },
                GeoPoint { lat: -35.0, lon: -150.0 },
            ],
            omni_resolution_s: 300,
            gim_resolution_s: 3600,
            target_resolution_s: 300,
            driver_amplitude: 1.0,
            driver_delay_s: 7_200,
            storm_rate_per_year: 8.0,
            storm_depth: 0.35,
            storm_delay_s: 21_600,
            explicit_storms: None,
            target_noise: 0.08,
            driver_noise: 0.02,
            omni_noise: 1.0,
            longest_lag_s: 144 * 86_400,
            gim_lat_count: 19,
            gim_lon_count: 18,
            gim_point_count: 10,
        }
    }
}

const AP_QUIET: f64 = 6.0;
const IRRADIANCE_BASE: f64 = 120.0; // sfu scale
const VTEC_BASE: f64 = 24.0; // TECU scale
const NIGHT_FLOOR: f64 = 0.18;
const STD_FRACTION: f64 = 0.12;

/// Deterministic forcing terms shared by every channel.
///
/// Closed forms (d = days since bundle start, t in seconds):
///
///   env(t)   = 1 + A*(0.18 sin(2pi d/1400 + 0.3)
///                   + 0.22 sin(2pi d/27 + 1.1)
///                   + 0.10 sin(2pi d/5.4 + 2.0))
///   ap(t)    = 6 + sum_i amp_i * exp(-(t - t_i)/decay_i) for t >= t_i
///   depl(t)  = -depth * min(ap(t - storm_delay)/300, 1)
///   decl(t)  = -23.44 deg * cos(2pi (doy + 10)/365.25)
///   hour(t)  = 2pi * (sid/86400 + lon/360 - 0.5)
///   cosz     = sin(lat) sin(decl) + cos(lat) cos(decl) cos(hour)
///   g(x)     = 0.18 + 0.82 * max(x, 0)          (monotone diurnal shape)
///   eia(lat) = 1 + 0.45 * exp(-((|lat| - 15)/12)^2)
///   h(e)     = e                                 (monotone driver response)
///
///   vtec_clean(t, lat, lon) =
///       24 * eia(lat) * g(cosz(t, lat, lon)) * h(env(t - driver_delay))
///          * (1 + depl(t))
///
/// The emitted target is vtec_mean = vtec_clean * (1 + target_noise * N),
/// clamped to at least 0.02 TECU, and vtec_std = 0.12 * vtec_clean *
/// (1 + target_noise * N), clamped to at least 0.01 TECU.
pub(crate) struct Forcing<'a> {
    spec: &'a SyntheticSpec,
    storms: &'a [StormBurst],
}

impl<'a> Forcing<'a> {
    fn days(&self, t: i64) -> f64 {
        (t - self.spec.start_ts) as f64 / 86_400.0
    }

    pub fn envelope(&self, t: i64) -> f64 {
        let d = self.days(t);
        let a = self.spec.driver_amplitude;
        let tau = std::f64::consts::TAU;
        1.0 + a
            * (0.18 * (tau * d / 1400.0 + 0.3).sin()
                + 0.22 * (tau * d / 27.0 + 1.1).sin()
                + 0.10 * (tau * d / 5.4 + 2.0).sin())
    }

    pub fn ap(&self, t: i64) -> f64 {
        let mut v = AP_QUIET;
        for s in self.storms {
            if t >= s.start_ts {
                v += s.amplitude * (-((t - s.start_ts) as f64) / s.decay_s as f64).exp();
            }
        }
        v
    }

    pub fn depletion(&self, t: i64) -> f64 {
        let lagged = self.ap(t - self.spec.storm_delay_s);
        -self.spec.storm_depth * (lagged / 300.0).min(1.0)
    }

    pub fn vtec_clean(&self, t: i64, lat: f64, lon: f64) -> f64 {
        let cosz = solar_zenith_cos(t, lat, lon);
        let g = NIGHT_FLOOR + (1.0 - NIGHT_FLOOR) * cosz.max(0.0);
        let eia = 1.0 + 0.45 * (-((lat.abs() - 15.0) / 12.0).powi(2)).exp();
        let driver = self.envelope(t - self.spec.driver_delay_s);
        VTEC_BASE * eia * g * driver * (1.0 + self.depletion(t))
    }
}

/// Cosine of the solar zenith angle from a flat-declination ephemeris.
pub(crate) fn solar_zenith_cos(t: i64, lat: f64, lon: f64) -> f64 {
    let doy = crate::timeseries::fractional_day_of_year(t);
    let decl = (-23.44_f64).to_radians()
        * (std::f64::consts::TAU * (doy + 10.0) / 365.25).cos();
    let sid = t.rem_euclid(86_400) as f64;
    let hour_angle = std::f64::consts::TAU * (sid / 86_400.0 + lon / 360.0 - 0.5);
    let phi = lat.to_radians();
    phi.sin() * decl.sin() + phi.cos() * decl.cos() * hour_angle.cos()
}

/// Generates the seven driver frames plus the target. Bit-reproducible:
/// the output is a pure function of the spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SourceBundle> {
    let span_s = spec.span_days as i64 * 86_400;
    if span_s < 2 * spec.longest_lag_s {
        return Err(Error::invalid_argument(format!(
            "span of {} days is too short: must cover at least 2x the longest lag ({} days required)",
            spec.span_days,
            (2 * spec.longest_lag_s).div_euclid(86_400)
        )));
    }
    if spec.locations.is_empty() {
        return Err(Error::invalid_argument("at least one target location required"));
    }
    if !(0.0..=1.8).contains(&spec.driver_amplitude) {
        return Err(Error::invalid_argument(
            "driver_amplitude must lie in [0, 1.8]",
        ));
    }
    if !(0.0..=0.9).contains(&spec.storm_depth) {
        return Err(Error::invalid_argument("storm_depth must lie in [0, 0.9]"));
    }
    for res in [
        spec.omni_resolution_s,
        spec.gim_resolution_s,
        spec.target_resolution_s,
    ] {
        if res <= 0 {
            return Err(Error::invalid_argument("resolutions must be positive"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let end_ts = spec.start_ts + span_s;

    let storms: Vec<StormBurst> = match &spec.explicit_storms {
        Some(list) => list.clone(),
        None => {
            let years = spec.span_days as f64 / 365.25;
            let expected = spec.storm_rate_per_year * years;
            let mut count = expected.floor() as usize;
            if rng.gen::<f64>() < expected.fract() {
                count += 1;
            }
            let mut drawn: Vec<StormBurst> = (0..count)
                .map(|_| {
                    let start_ts = spec.start_ts + rng.gen_range(0..span_s.max(1));
                    let u: f64 = rng.gen();
                    StormBurst {
                        start_ts,
                        amplitude: 20.0 + 260.0 * u.powi(3),
                        decay_s: rng.gen_range(86_400..259_200),
                    }
                })
                .collect();
            drawn.sort_by_key(|s| s.start_ts);
            drawn
        }
    };
    let forcing = Forcing { spec, storms: &storms };

    let grid_ts = |res: i64| -> Vec<i64> {
        (0..)
            .map(|k| spec.start_ts + k * res)
            .take_while(|&t| t < end_ts)
            .collect()
    };
    let omni_ts = grid_ts(spec.omni_resolution_s);
    let daily_ts = grid_ts(86_400);
    let gim_ts = grid_ts(spec.gim_resolution_s);
    let target_ts = grid_ts(spec.target_resolution_s);

    let mut normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let mut frames: BTreeMap<String, TimeSeriesFrame> = BTreeMap::new();

    // omni_indices: dst and kp track the storm state
    {
        let mut dst = Vec::with_capacity(omni_ts.len());
        let mut kp = Vec::with_capacity(omni_ts.len());
        for &t in &omni_ts {
            let ap = forcing.ap(t);
            dst.push(-8.0 - 2.0 * (ap - AP_QUIET) + 2.0 * spec.omni_noise * normal(&mut rng));
            let k = 1.8 + 1.1 * (1.0 + ap / 6.0).ln() + 0.15 * spec.omni_noise * normal(&mut rng);
            kp.push(k.clamp(0.0, 9.0));
        }
        frames.insert(
            "omni_indices".into(),
            TimeSeriesFrame::new(
                "omni_indices",
                omni_ts.clone(),
                vec![
                    Channel { name: "dst".into(), unit: "nT".into(), values: dst },
                    Channel { name: "kp".into(), unit: "index".into(), values: kp },
                ],
                spec.omni_resolution_s,
            )?,
        );
    }

    // omni_solar_wind
    {
        let tau = std::f64::consts::TAU;
        let mut speed = Vec::with_capacity(omni_ts.len());
        let mut density = Vec::with_capacity(omni_ts.len());
        for &t in &omni_ts {
            let d = forcing.days(t);
            let ap = forcing.ap(t);
            speed.push(
                420.0
                    + 35.0 * (tau * d / 13.5 + 0.7).sin()
                    + 1.2 * (ap - AP_QUIET)
                    + 8.0 * spec.omni_noise * normal(&mut rng),
            );
            density.push(5.5 + 2.5 * (tau * d / 9.0 + 1.9).sin() + 0.8 * spec.omni_noise * normal(&mut rng));
        }
        frames.insert(
            "omni_solar_wind".into(),
            TimeSeriesFrame::new(
                "omni_solar_wind",
                omni_ts.clone(),
                vec![
                    Channel { name: "sw_speed".into(), unit: "km/s".into(), values: speed },
                    Channel { name: "sw_density".into(), unit: "n/cc".into(), values: density },
                ],
                spec.omni_resolution_s,
            )?,
        );
    }

    // omni_magnetic_field
    {
        let tau = std::f64::consts::TAU;
        let mut bz = Vec::with_capacity(omni_ts.len());
        let mut bt = Vec::with_capacity(omni_ts.len());
        for &t in &omni_ts {
            let d = forcing.days(t);
            let ap = forcing.ap(t);
            let bz_clean = 1.2 * (tau * d / 3.2 + 0.5).sin() - 0.045 * (ap - AP_QUIET);
            bz.push(bz_clean + 0.9 * spec.omni_noise * normal(&mut rng));
            bt.push(5.5 + 0.8 * bz_clean.abs() + 0.5 * spec.omni_noise * normal(&mut rng));
        }
        frames.insert(
            "omni_magnetic_field".into(),
            TimeSeriesFrame::new(
                "omni_magnetic_field",
                omni_ts.clone(),
                vec![
                    Channel { name: "bz".into(), unit: "nT".into(), values: bz },
                    Channel { name: "bt".into(), unit: "nT".into(), values: bt },
                ],
                spec.omni_resolution_s,
            )?,
        );
    }

    // ap_index: daily planetary amplitude, noise-free by construction
    {
        let ap: Vec<f64> = daily_ts.iter().map(|&t| forcing.ap(t)).collect();
        frames.insert(
            "ap_index".into(),
            TimeSeriesFrame::new(
                "ap_index",
                daily_ts.clone(),
                vec![Channel { name: "ap".into(), unit: "index".into(), values: ap }],
                86_400,
            )?,
        );
    }

    // solar_proxies: four scaled views of the irradiance envelope plus the
    // planted pure-noise channel
    {
        let mut f107 = Vec::with_capacity(daily_ts.len());
        let mut m107 = Vec::with_capacity(daily_ts.len());
        let mut s107 = Vec::with_capacity(daily_ts.len());
        let mut y107 = Vec::with_capacity(daily_ts.len());
        let mut p_noise = Vec::with_capacity(daily_ts.len());
        for &t in &daily_ts {
            let irr = IRRADIANCE_BASE * forcing.envelope(t);
            let dn = spec.driver_noise * IRRADIANCE_BASE;
            f107.push(irr + dn * normal(&mut rng));
            m107.push(0.97 * irr + 4.0 + dn * normal(&mut rng));
            s107.push(1.03 * irr - 5.0 + dn * normal(&mut rng));
            y107.push(0.90 * irr + 10.0 + dn * normal(&mut rng));
            p_noise.push(100.0 + 30.0 * normal(&mut rng));
        }
        frames.insert(
            "solar_proxies".into(),
            TimeSeriesFrame::new(
                "solar_proxies",
                daily_ts.clone(),
                vec![
                    Channel { name: "f107".into(), unit: "sfu".into(), values: f107 },
                    Channel { name: "m107".into(), unit: "sfu".into(), values: m107 },
                    Channel { name: "s107".into(), unit: "sfu".into(), values: s107 },
                    Channel { name: "y107".into(), unit: "sfu".into(), values: y107 },
                    Channel { name: "p_noise".into(), unit: "arb".into(), values: p_noise },
                ],
                86_400,
            )?,
        );
    }

    // timed_see_l3: three irradiance bands
    {
        let mut bands: Vec<Vec<f64>> = vec![Vec::with_capacity(daily_ts.len()); 3];
        for &t in &daily_ts {
            let env = forcing.envelope(t);
            for (k, band) in bands.iter_mut().enumerate() {
                let scale = 0.9 * (k as f64 + 1.0);
                band.push(scale * env + 0.02 * scale * normal(&mut rng));
            }
        }
        let channels = bands
            .into_iter()
            .enumerate()
            .map(|(k, values)| Channel {
                name: format!("see_band{k}"),
                unit: "mW/m2".into(),
                values,
            })
            .collect();
        frames.insert(
            "timed_see_l3".into(),
            TimeSeriesFrame::new("timed_see_l3", daily_ts.clone(), channels, 86_400)?,
        );
    }

    // jpl_gim: evaluate the clean field on a coarse grid, then subsample
    let gim_points = {
        let nlat = spec.gim_lat_count;
        let nlon = spec.gim_lon_count;
        let latitudes: Vec<f64> = (0..nlat)
            .map(|i| -90.0 + 180.0 * i as f64 / (nlat - 1) as f64)
            .collect();
        let longitudes: Vec<f64> = (0..nlon)
            .map(|i| -180.0 + 360.0 * i as f64 / nlon as f64)
            .collect();
        let mut values = Vec::with_capacity(gim_ts.len() * nlat * nlon);
        for &t in &gim_ts {
            for &lat in &latitudes {
                for &lon in &longitudes {
                    values.push(forcing.vtec_clean(t, lat, lon).max(0.0));
                }
            }
        }
        let grid = GimGrid::new(gim_ts.clone(), latitudes, longitudes, values, spec.gim_resolution_s)?;
        let (frame, points) = subsample_gim(&grid, spec.gim_point_count)?;
        frames.insert("jpl_gim".into(), frame);
        points
    };

    // target_vtec
    {
        let mut channels = Vec::with_capacity(spec.locations.len() * 2);
        for (i, loc) in spec.locations.iter().enumerate() {
            let (mean_name, std_name) = target_channel_names(i);
            let mut means = Vec::with_capacity(target_ts.len());
            let mut stds = Vec::with_capacity(target_ts.len());
            for &t in &target_ts {
                let clean = forcing.vtec_clean(t, loc.lat, loc.lon);
                let mean = (clean * (1.0 + spec.target_noise * normal(&mut rng))).max(0.02);
                let std = (STD_FRACTION * clean * (1.0 + spec.target_noise * normal(&mut rng)))
                    .max(0.01);
                means.push(mean);
                stds.push(std);
            }
            channels.push(Channel { name: mean_name, unit: "TECU".into(), values: means });
            channels.push(Channel { name: std_name, unit: "TECU".into(), values: stds });
        }
        frames.insert(
            "target_vtec".into(),
            TimeSeriesFrame::new("target_vtec", target_ts, channels, spec.target_resolution_s)?,
        );
    }

    SourceBundle::new(frames, spec.locations.clone(), gim_points)
}
