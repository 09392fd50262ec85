//! Evaluation binning: latitude bands, geomagnetic storm classes, and
//! solar activity levels. Interval notation follows the printed table
//! labels literally.

use crate::error::{Error, Result};

/// Absolute-latitude bands: equatorial/low (<30), mid [30, 60], high (>60).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LatitudeBand {
    Low,
    Mid,
    High,
}

impl LatitudeBand {
    pub const ALL: [LatitudeBand; 3] = [LatitudeBand::Low, LatitudeBand::Mid, LatitudeBand::High];

    pub fn label(&self) -> &'static str {
        match self {
            LatitudeBand::Low => "<30°",
            LatitudeBand::Mid => "30–60°",
            LatitudeBand::High => ">60°",
        }
    }
}

pub fn latitude_band(lat: f64) -> Result<LatitudeBand> {
    if !lat.is_finite() || lat.abs() > 90.0 {
        return Err(Error::invalid_argument(format!(
            "latitude {lat} outside [-90, 90]"
        )));
    }
    let a = lat.abs();
    Ok(if a < 30.0 {
        LatitudeBand::Low
    } else if a <= 60.0 {
        LatitudeBand::Mid
    } else {
        LatitudeBand::High
    })
}

/// Storm classes by ap value: [0-39], (39-67], (67-111], (111-300].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ApBin {
    Quiet,
    Minor,
    Moderate,
    Severe,
}

impl ApBin {
    pub const ALL: [ApBin; 4] = [ApBin::Quiet, ApBin::Minor, ApBin::Moderate, ApBin::Severe];

    pub fn label(&self) -> &'static str {
        match self {
            ApBin::Quiet => "[0-39]",
            ApBin::Minor => "(39-67]",
            ApBin::Moderate => "(67-111]",
            ApBin::Severe => "(111-300]",
        }
    }
}

/// Bins an ap value; values above 300 clamp into the top bin with the
/// second tuple element set (caller records the warning).
pub fn ap_bin(ap: f64) -> Result<(ApBin, bool)> {
    if !ap.is_finite() || ap < 0.0 {
        return Err(Error::invalid_argument(format!("ap must be >= 0, got {ap}")));
    }
    let bin = if ap <= 39.0 {
        ApBin::Quiet
    } else if ap <= 67.0 {
        ApBin::Minor
    } else if ap <= 111.0 {
        ApBin::Moderate
    } else {
        ApBin::Severe
    };
    Ok((bin, ap > 300.0))
}

/// Solar activity levels by F10.7: [0-70], (70-150], [150-200).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum F107Bin {
    Low,
    Moderate,
    High,
}

impl F107Bin {
    pub const ALL: [F107Bin; 3] = [F107Bin::Low, F107Bin::Moderate, F107Bin::High];

    pub fn label(&self) -> &'static str {
        match self {
            F107Bin::Low => "[0-70]",
            F107Bin::Moderate => "(70-150]",
            F107Bin::High => "[150-200)",
        }
    }
}

/// Bins an F10.7 value; values at or above 200 fall into the top bin with
/// the warning flag set.
pub fn f107_bin(f107: f64) -> Result<(F107Bin, bool)> {
    if !f107.is_finite() || f107 < 0.0 {
        return Err(Error::invalid_argument(format!(
            "F10.7 must be >= 0, got {f107}"
        )));
    }
    let bin = if f107 <= 70.0 {
        F107Bin::Low
    } else if f107 <= 150.0 {
        F107Bin::Moderate
    } else {
        F107Bin::High
    };
    Ok((bin, f107 >= 200.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latitude_band_boundaries() {
        assert_eq!(latitude_band(45.0).unwrap(), LatitudeBand::Mid);
        assert_eq!(latitude_band(-75.0).unwrap(), LatitudeBand::High);
        assert_eq!(latitude_band(30.0).unwrap(), LatitudeBand::Mid);
        assert_eq!(latitude_band(60.0).unwrap(), LatitudeBand::Mid);
        assert_eq!(latitude_band(29.999).unwrap(), LatitudeBand::Low);
        assert_eq!(latitude_band(0.0).unwrap(), LatitudeBand::Low);
        assert!(latitude_band(90.5).is_err());
    }

    #[test]
    fn ap_bin_edges_follow_printed_intervals() {
        assert_eq!(ap_bin(39.0).unwrap(), (ApBin::Quiet, false));
        assert_eq!(ap_bin(40.0).unwrap(), (ApBin::Minor, false));
        assert_eq!(ap_bin(0.0).unwrap(), (ApBin::Quiet, false));
        assert_eq!(ap_bin(67.0).unwrap(), (ApBin::Minor, false));
        assert_eq!(ap_bin(111.5).unwrap(), (ApBin::Severe, false));
        assert_eq!(ap_bin(400.0).unwrap(), (ApBin::Severe, true));
        assert!(ap_bin(-1.0).is_err());
    }

    #[test]
    fn f107_bin_edges_follow_printed_intervals() {
        assert_eq!(f107_bin(70.0).unwrap(), (F107Bin::Low, false));
        assert_eq!(f107_bin(160.0).unwrap(), (F107Bin::High, false));
        assert_eq!(f107_bin(150.0).unwrap(), (F107Bin::Moderate, false));
        assert_eq!(f107_bin(250.0).unwrap(), (F107Bin::High, true));
    }
}
