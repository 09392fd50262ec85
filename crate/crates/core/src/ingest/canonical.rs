//! Canonical delimiter-separated source files.
//!
//! Layout: first line `timestamp,<ch1>,<ch2>,...`, second line
//! `#units,<u1>,<u2>,...`, then one row per sample with an ISO-8601 UTC
//! timestamp and one value per channel. Missing values are empty cells.

use std::path::Path;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};

use crate::error::{Error, Result};
use crate::timeseries::{Channel, TimeSeriesFrame};

/// Expected layout of one canonical file.
#[derive(Debug, Clone)]
pub struct CanonicalSchema {
    pub source_id: String,
    /// (name, unit) per channel, in column order.
    pub channels: Vec<(String, String)>,
    pub resolution_s: i64,
}

/// Renders a frame in canonical form. `parse_canonical` inverts this
/// exactly (floats use the shortest round-trippable representation).
pub fn serialize_frame(frame: &TimeSeriesFrame) -> String {
    let mut out = String::new();
    out.push_str("timestamp");
    for ch in frame.channels() {
        out.push(',');
        out.push_str(&ch.name);
    }
    out.push('\n');
    out.push_str("#units");
    for ch in frame.channels() {
        out.push(',');
        out.push_str(&ch.unit);
    }
    out.push('\n');
    for (i, &ts) in frame.timestamps().iter().enumerate() {
        let dt = Utc.timestamp_opt(ts, 0).unwrap();
        out.push_str(&dt.to_rfc3339_opts(SecondsFormat::Secs, true));
        for ch in frame.channels() {
            out.push(',');
            let v = ch.values[i];
            if v.is_finite() {
                out.push_str(&format!("{v}"));
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_canonical(path: &Path, schema: &CanonicalSchema) -> Result<TimeSeriesFrame> {
    let text = std::fs::read_to_string(path)?;
    parse_canonical_str(&text, &path.display().to_string(), schema)
}

pub fn parse_canonical_str(
    text: &str,
    path: &str,
    schema: &CanonicalSchema,
) -> Result<TimeSeriesFrame> {
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::EmptyInput(format!("{path}: file is empty")))?;
    let expected_header: Vec<&str> = std::iter::once("timestamp")
        .chain(schema.channels.iter().map(|(n, _)| n.as_str()))
        .collect();
    let got_header: Vec<&str> = header.split(',').collect();
    if got_header != expected_header {
        return Err(Error::Schema {
            path: path.to_string(),
            diff: format!("expected columns {expected_header:?}, found {got_header:?}"),
        });
    }

    let (_, units_line) = lines.next().ok_or_else(|| Error::Format {
        path: path.to_string(),
        line: 2,
        reason: "missing #units line".into(),
    })?;
    let expected_units: Vec<&str> = std::iter::once("#units")
        .chain(schema.channels.iter().map(|(_, u)| u.as_str()))
        .collect();
    let got_units: Vec<&str> = units_line.split(',').collect();
    if got_units != expected_units {
        return Err(Error::Schema {
            path: path.to_string(),
            diff: format!("expected units {expected_units:?}, found {got_units:?}"),
        });
    }

    let ncols = schema.channels.len();
    let mut timestamps: Vec<i64> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); ncols];
    for (zero_based, row) in lines {
        let line_no = zero_based + 1;
        if row.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != ncols + 1 {
            return Err(Error::Format {
                path: path.to_string(),
                line: line_no,
                reason: format!("expected {} cells, found {}", ncols + 1, cells.len()),
            });
        }
        let ts = parse_timestamp(cells[0]).map_err(|reason| Error::Format {
            path: path.to_string(),
            line: line_no,
            reason,
        })?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::Format {
                    path: path.to_string(),
                    line: line_no,
                    reason: format!("timestamp {} not after previous {}", cells[0], prev),
                });
            }
        }
        timestamps.push(ts);
        for (c, cell) in cells[1..].iter().enumerate() {
            if cell.is_empty() {
                values[c].push(f64::NAN);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Format {
                    path: path.to_string(),
                    line: line_no,
                    reason: format!("cannot parse '{cell}' as a number"),
                })?;
                values[c].push(v);
            }
        }
    }

    let channels = schema
        .channels
        .iter()
        .zip(values)
        .map(|((name, unit), vals)| Channel {
            name: name.clone(),
            unit: unit.clone(),
            values: vals,
        })
        .collect();
    TimeSeriesFrame::new(
        schema.source_id.clone(),
        timestamps,
        channels,
        schema.resolution_s,
    )
}

fn parse_timestamp(cell: &str) -> std::result::Result<i64, String> {
    DateTime::parse_from_rfc3339(cell)
        .map(|dt| dt.timestamp())
        .map_err(|e| format!("bad timestamp '{cell}': {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CanonicalSchema {
        CanonicalSchema {
            source_id: "test".into(),
            channels: vec![("a".into(), "nT".into()), ("b".into(), "sfu".into())],
            resolution_s: 3600,
        }
    }

    #[test]
    fn parses_three_rows_two_channels() {
        let text = "timestamp,a,b\n#units,nT,sfu\n\
                    2014-03-01T00:00:00Z,1,2\n\
                    2014-03-01T01:00:00Z,3,4\n\
                    2014-03-01T02:00:00Z,5,6\n";
        let frame = parse_canonical_str(text, "mem", &schema()).unwrap();
        assert_eq!(frame.len(), 3);
        assert_eq!(frame.channels().len(), 2);
        assert_eq!(frame.channel("b").unwrap().values, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn backwards_timestamp_cites_offending_line() {
        let text = "timestamp,a,b\n#units,nT,sfu\n\
                    2014-03-01T00:00:00Z,1,2\n\
                    2014-03-01T01:00:00Z,3,4\n\
                    2014-03-01T02:00:00Z,5,6\n\
                    2014-03-01T03:00:00Z,5,6\n\
                    2014-03-01T02:30:00Z,5,6\n";
        let err = parse_canonical_str(text, "mem", &schema()).unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 7),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn empty_cell_becomes_missing() {
        let text = "timestamp,a,b\n#units,nT,sfu\n\
                    2014-03-01T00:00:00Z,1,\n\
                    2014-03-01T01:00:00Z,3,4\n";
        let frame = parse_canonical_str(text, "mem", &schema()).unwrap();
        assert!(frame.channel("b").unwrap().values[0].is_nan());
        assert_eq!(frame.channel("b").unwrap().values[1], 4.0);
    }

    #[test]
    fn header_mismatch_reports_column_diff() {
        let text = "timestamp,a,c\n#units,nT,sfu\n";
        let err = parse_canonical_str(text, "mem", &schema()).unwrap_err();
        match err {
            Error::Schema { diff, .. } => {
                assert!(diff.contains("\"b\"") && diff.contains("\"c\""), "{diff}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn serialize_then_parse_round_trips() {
        let frame = TimeSeriesFrame::new(
            "test",
            vec![1_393_632_000, 1_393_635_600],
            vec![
                Channel {
                    name: "a".into(),
                    unit: "nT".into(),
                    values: vec![0.1, f64::NAN],
                },
                Channel {
                    name: "b".into(),
                    unit: "sfu".into(),
                    values: vec![-3.25, 7.0e-11],
                },
            ],
            3600,
        )
        .unwrap();
        let text = serialize_frame(&frame);
        let back = parse_canonical_str(&text, "mem", &schema()).unwrap();
        assert_eq!(back.timestamps(), frame.timestamps());
        assert_eq!(back.channel("b").unwrap().values, frame.channel("b").unwrap().values);
        assert!(back.channel("a").unwrap().values[1].is_nan());
    }
}
