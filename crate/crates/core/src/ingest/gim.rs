//! Global ionospheric map grids and point subsampling.

use crate::error::{Error, Result};
use crate::ingest::GeoPoint;
use crate::timeseries::{Channel, TimeSeriesFrame};

/// Gridded vTEC product: values indexed [time][lat][lon], row-major.
#[derive(Debug, Clone)]
pub struct GimGrid {
    pub timestamps: Vec<i64>,
    pub latitudes: Vec<f64>,
    pub longitudes: Vec<f64>,
    pub values: Vec<f64>,
    pub resolution_s: i64,
}

impl GimGrid {
    pub fn new(
        timestamps: Vec<i64>,
        latitudes: Vec<f64>,
        longitudes: Vec<f64>,
        values: Vec<f64>,
        resolution_s: i64,
    ) -> Result<Self> {
        let expected = timestamps.len() * latitudes.len() * longitudes.len();
        if values.len() != expected {
            return Err(Error::invalid_argument(format!(
                "grid has {} values, expected {}",
                values.len(),
                expected
            )));
        }
        if !is_strictly_monotone(&latitudes) || !is_strictly_monotone(&longitudes) {
            return Err(Error::invalid_argument(
                "grid axes must be strictly monotone",
            ));
        }
        if latitudes.iter().any(|l| !(-90.0..=90.0).contains(l)) {
            return Err(Error::invalid_argument("latitudes must lie in [-90, 90]"));
        }
        if longitudes.iter().any(|l| !(-180.0..180.0).contains(l)) {
            return Err(Error::invalid_argument("longitudes must lie in [-180, 180)"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid_argument("TECU values must be non-negative"));
        }
        Ok(GimGrid {
            timestamps,
            latitudes,
            longitudes,
            values,
            resolution_s,
        })
    }

    pub fn node_count(&self) -> usize {
        self.latitudes.len() * self.longitudes.len()
    }

    pub fn value(&self, t: usize, lat: usize, lon: usize) -> f64 {
        let nlat = self.latitudes.len();
        let nlon = self.longitudes.len();
        self.values[(t * nlat + lat) * nlon + lon]
    }
}

fn is_strictly_monotone(axis: &[f64]) -> bool {
    axis.windows(2).all(|w| w[1] > w[0]) || axis.windows(2).all(|w| w[1] < w[0])
}

/// Deterministic near-equal-area point set: equal-area latitude spacing with
/// golden-angle longitude increments. Depends only on `n`.
pub fn fibonacci_lattice(n: usize) -> Vec<GeoPoint> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let lat = z.asin().to_degrees();
            let mut lon = (i as f64 * golden_angle).to_degrees() % 360.0;
            if lon >= 180.0 {
                lon -= 360.0;
            } else if lon < -180.0 {
                lon += 360.0;
            }
            GeoPoint { lat, lon }
        })
        .collect()
}

fn chord_distance_sq(a: GeoPoint, b: GeoPoint) -> f64 {
    let (alat, alon) = (a.lat.to_radians(), a.lon.to_radians());
    let (blat, blon) = (b.lat.to_radians(), b.lon.to_radians());
    let av = [
        alat.cos() * alon.cos(),
        alat.cos() * alon.sin(),
        alat.sin(),
    ];
    let bv = [
        blat.cos() * blon.cos(),
        blat.cos() * blon.sin(),
        blat.sin(),
    ];
    (av[0] - bv[0]).powi(2) + (av[1] - bv[1]).powi(2) + (av[2] - bv[2]).powi(2)
}

/// Reduces a grid to `n` fixed point channels `gim_p0..gim_p{n-1}`.
///
/// Each lattice point snaps to the nearest untaken grid node (great-circle
/// distance; ties and collisions resolve to the next-nearest node so the
/// selected nodes are always distinct). The selection depends only on `n`
/// and the grid axes, never on values or time. Returns the frame together
/// with the snapped node coordinates for the bundle manifest.
pub fn subsample_gim(grid: &GimGrid, n: usize) -> Result<(TimeSeriesFrame, Vec<GeoPoint>)> {
    if n < 1 {
        return Err(Error::invalid_argument("point count must be >= 1"));
    }
    if grid.timestamps.is_empty() {
        return Err(Error::EmptyInput("GIM grid has no timestamps".into()));
    }
    if n > grid.node_count() {
        return Err(Error::invalid_argument(format!(
            "requested {n} points but the grid has only {} nodes",
            grid.node_count()
        )));
    }

    let nlat = grid.latitudes.len();
    let nlon = grid.longitudes.len();
    let mut taken = vec![false; nlat * nlon];
    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(n);
    let mut points: Vec<GeoPoint> = Vec::with_capacity(n);
    for target in fibonacci_lattice(n) {
        let mut best: Option<(f64, usize, usize)> = None;
        for (li, &lat) in grid.latitudes.iter().enumerate() {
            for (gi, &lon) in grid.longitudes.iter().enumerate() {
                if taken[li * nlon + gi] {
                    continue;
                }
                let d = chord_distance_sq(target, GeoPoint { lat, lon });
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, li, gi));
                }
            }
        }
        let (_, li, gi) = best.expect("n <= node_count leaves a free node");
        taken[li * nlon + gi] = true;
        picks.push((li, gi));
        points.push(GeoPoint {
            lat: grid.latitudes[li],
            lon: grid.longitudes[gi],
        });
    }

    let channels = picks
        .iter()
        .enumerate()
        .map(|(i, &(li, gi))| Channel {
            name: format!("gim_p{i}"),
            unit: "TECU".into(),
            values: (0..grid.timestamps.len())
                .map(|t| grid.value(t, li, gi))
                .collect(),
        })
        .collect();
    let frame = TimeSeriesFrame::new(
        "jpl_gim",
        grid.timestamps.clone(),
        channels,
        grid.resolution_s,
    )?;
    Ok((frame, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_grid(nlat: usize, nlon: usize, f: impl Fn(usize, f64, f64) -> f64) -> GimGrid {
        let latitudes: Vec<f64> = (0..nlat)
            .map(|i| -90.0 + 180.0 * i as f64 / (nlat - 1) as f64)
            .collect();
        let longitudes: Vec<f64> = (0..nlon)
            .map(|i| -180.0 + 360.0 * i as f64 / nlon as f64)
            .collect();
        let timestamps: Vec<i64> = (0..4).map(|t| t * 3600).collect();
        let mut values = Vec::new();
        for t in 0..timestamps.len() {
            for &lat in &latitudes {
                for &lon in &longitudes {
                    values.push(f(t, lat, lon));
                }
            }
        }
        GimGrid::new(timestamps, latitudes, longitudes, values, 3600).unwrap()
    }

    #[test]
    fn single_point_sits_near_equator() {
        let grid = test_grid(19, 18, |_, _, _| 1.0);
        let (frame, points) = subsample_gim(&grid, 1).unwrap();
        assert_eq!(frame.channels().len(), 1);
        assert_eq!(frame.channels()[0].name, "gim_p0");
        assert!(points[0].lat.abs() < 15.0, "lat {}", points[0].lat);
    }

    #[test]
    fn ten_points_on_dense_grid_are_distinct_and_nearest() {
        let grid = test_grid(73, 72, |_, lat, lon| (lat + 90.0) + (lon + 180.0) * 0.001);
        let (frame, points) = subsample_gim(&grid, 10).unwrap();
        assert_eq!(frame.channels().len(), 10);
        let mut seen = std::collections::BTreeSet::new();
        for p in &points {
            assert!(seen.insert(format!("{:.6},{:.6}", p.lat, p.lon)));
        }
        // brute-force nearest-node oracle (dense grid: no collisions)
        for (target, snapped) in fibonacci_lattice(10).iter().zip(&points) {
            let mut best = (f64::INFINITY, GeoPoint { lat: 0.0, lon: 0.0 });
            for &lat in &grid.latitudes {
                for &lon in &grid.longitudes {
                    let d = chord_distance_sq(*target, GeoPoint { lat, lon });
                    if d < best.0 {
                        best = (d, GeoPoint { lat, lon });
                    }
                }
            }
            assert_eq!((best.1.lat, best.1.lon), (snapped.lat, snapped.lon));
        }
    }

    #[test]
    fn constant_grid_gives_equal_constant_channels() {
        let grid = test_grid(19, 18, |_, _, _| 7.5);
        let (frame, _) = subsample_gim(&grid, 5).unwrap();
        for ch in frame.channels() {
            assert!(ch.values.iter().all(|&v| v == 7.5));
        }
    }

    #[test]
    fn selection_ignores_values_and_time() {
        let a = test_grid(19, 18, |t, lat, lon| (t as f64) * lat.abs() + lon.abs());
        let b = test_grid(19, 18, |_, _, _| 3.0);
        let (_, pa) = subsample_gim(&a, 10).unwrap();
        let (_, pb) = subsample_gim(&b, 10).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn too_many_points_is_an_error() {
        let grid = test_grid(3, 4, |_, _, _| 0.0);
        assert!(subsample_gim(&grid, 13).is_err());
    }
}
