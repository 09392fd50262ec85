//! Monthly-rotation train/validation/test split.
//!
//! Within each calendar year y, the validation month is
//! ((y - anchor) mod 12) + 1 and the test month is
//! ((y - anchor + 6) mod 12) + 1; the other ten months train. Over many
//! years this rotates both held-out months through the seasons while
//! realizing the closest month-granular approximation of 80/10/10.

use std::collections::BTreeMap;

use chrono::{Datelike, TimeZone, Utc};

use crate::config::SplitConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Train => write!(f, "train"),
            Role::Val => write!(f, "val"),
            Role::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Role> {
        match s {
            "train" => Ok(Role::Train),
            "val" | "validation" => Ok(Role::Val),
            "test" => Ok(Role::Test),
            other => Err(Error::invalid_argument(format!("unknown role '{other}'"))),
        }
    }
}

/// Role assignment for every calendar month covered by a span.
#[derive(Debug, Clone)]
pub struct SplitTable {
    anchor_year: i32,
    months: BTreeMap<(i32, u32), Role>,
}

/// Role of month `m` (1-12) in year `y` under the rotation anchored at
/// `anchor`.
pub fn role_of_month(anchor: i32, year: i32, month: u32) -> Role {
    let val = ((year - anchor).rem_euclid(12) + 1) as u32;
    let test = ((year - anchor + 6).rem_euclid(12) + 1) as u32;
    if month == val {
        Role::Val
    } else if month == test {
        Role::Test
    } else {
        Role::Train
    }
}

/// Assigns a role to every calendar month overlapping `coverage`.
pub fn make_splits(coverage: (i64, i64), split: &SplitConfig) -> Result<SplitTable> {
    let (start, end) = coverage;
    if end < start {
        return Err(Error::invalid_argument("coverage end precedes start"));
    }
    let start_dt = Utc
        .timestamp_opt(start, 0)
        .single()
        .ok_or_else(|| Error::invalid_argument("bad coverage start"))?;
    let end_dt = Utc
        .timestamp_opt(end, 0)
        .single()
        .ok_or_else(|| Error::invalid_argument("bad coverage end"))?;

    let month_index = |y: i32, m: u32| y as i64 * 12 + (m as i64 - 1);
    let first = month_index(start_dt.year(), start_dt.month());
    let last = month_index(end_dt.year(), end_dt.month());
    if last - first + 1 < 12 {
        return Err(Error::InsufficientSpan(format!(
            "monthly rotation needs at least 12 months of coverage, found {}",
            last - first + 1
        )));
    }

    let mut months = BTreeMap::new();
    for idx in first..=last {
        let year = idx.div_euclid(12) as i32;
        let month = (idx.rem_euclid(12) + 1) as u32;
        months.insert((year, month), role_of_month(split.anchor_year, year, month));
    }
    Ok(SplitTable {
        anchor_year: split.anchor_year,
        months,
    })
}

impl SplitTable {
    pub fn role_of(&self, year: i32, month: u32) -> Role {
        role_of_month(self.anchor_year, year, month)
    }

    pub fn role_of_ts(&self, ts: i64) -> Role {
        let dt = Utc.timestamp_opt(ts, 0).unwrap();
        self.role_of(dt.year(), dt.month())
    }

    pub fn months(&self) -> &BTreeMap<(i32, u32), Role> {
        &self.months
    }

    /// (train, val, test) month counts over the covered span.
    pub fn month_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for role in self.months.values() {
            match role {
                Role::Train => counts.0 += 1,
                Role::Val => counts.1 += 1,
                Role::Test => counts.2 += 1,
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(anchor: i32) -> SplitConfig {
        SplitConfig {
            scheme: "monthly-rotation".into(),
            anchor_year: anchor,
            fractions: vec![0.8, 0.1, 0.1],
        }
    }

    #[test]
    fn anchor_year_puts_val_in_january_test_in_july() {
        assert_eq!(role_of_month(2010, 2010, 1), Role::Val);
        assert_eq!(role_of_month(2010, 2010, 7), Role::Test);
        assert_eq!(role_of_month(2010, 2010, 2), Role::Train);
    }

    #[test]
    fn six_years_later_roles_swap() {
        assert_eq!(role_of_month(2010, 2016, 7), Role::Val);
        assert_eq!(role_of_month(2010, 2016, 1), Role::Test);
    }

    #[test]
    fn every_month_gets_exactly_one_role() {
        for year in 2010..2030 {
            let mut vals = 0;
            let mut tests = 0;
            for month in 1..=12 {
                match role_of_month(2010, year, month) {
                    Role::Val => vals += 1,
                    Role::Test => tests += 1,
                    Role::Train => {}
                }
            }
            assert_eq!((vals, tests), (1, 1), "year {year}");
        }
    }

    #[test]
    fn full_years_split_ten_one_one() {
        // 2014-01-01 .. 2016-12-31
        let table = make_splits((1_388_534_400, 1_483_228_799), &split(2014)).unwrap();
        let (train, val, test) = table.month_counts();
        assert_eq!((train, val, test), (30, 3, 3));
    }

    #[test]
    fn short_coverage_is_rejected() {
        let err = make_splits((1_388_534_400, 1_388_534_400 + 200 * 86_400), &split(2014))
            .unwrap_err();
        assert!(matches!(err, Error::InsufficientSpan(_)));
    }

    #[test]
    fn role_lookup_by_timestamp_matches_formula() {
        let table = make_splits((1_388_534_400, 1_483_228_799), &split(2014)).unwrap();
        // 2014-01-15 is in the validation month for anchor 2014
        assert_eq!(table.role_of_ts(1_388_534_400 + 14 * 86_400), Role::Val);
        // 2014-07-15 is in the test month
        assert_eq!(table.role_of_ts(1_404_172_800 + 14 * 86_400), Role::Test);
    }
}
