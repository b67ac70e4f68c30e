use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDateTime, Timelike};
use log::{info, warn};

use super::{Dataset, Observation};
use crate::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const HEADER: [&str; 6] = [
    "timestamp",
    "load",
    "temperature",
    "humidity",
    "ghi",
    "wind_speed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Gaps of up to this many missing hours are linearly imputed; longer gaps are errors.
    pub max_gap_hours: i64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { max_gap_hours: 3 }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let ds = read_dataset(File::open(path)?, opts)?;
    info!(
        "loaded {} rows from {} ({} .. {})",
        ds.len(),
        path.display(),
        ds.start().map(|t| t.to_string()).unwrap_or_default(),
        ds.end().map(|t| t.to_string()).unwrap_or_default()
    );
    Ok(ds)
}

/// Parses the `timestamp,load,temperature,humidity,ghi,wind_speed` schema.
/// Lines starting with `#` are ignored.
pub fn read_dataset<R: Read>(reader: R, opts: &LoadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names != HEADER {
        return Err(Error::MalformedRow {
            line: header.position().map(|p| p.line() as usize).unwrap_or(1),
            reason: format!("expected header `{}`, got `{}`", HEADER.join(","), names.join(",")),
        });
    }

    let mut rows: Vec<(usize, Observation)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::MalformedRow {
                line,
                reason: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let malformed = |reason: String| Error::MalformedRow { line, reason };
        if rec.len() != HEADER.len() {
            return Err(malformed(format!("expected 6 fields, got {}", rec.len())));
        }
        let timestamp = NaiveDateTime::parse_from_str(&rec[0], TIMESTAMP_FORMAT)
            .map_err(|e| malformed(format!("bad timestamp `{}`: {e}", &rec[0])))?;
        if timestamp.minute() != 0 || timestamp.second() != 0 {
            return Err(malformed(format!("timestamp `{}` is not on the hour", &rec[0])));
        }
        let mut vals = [0.0f64; 5];
        for (k, v) in vals.iter_mut().enumerate() {
            let field = &rec[k + 1];
            *v = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| malformed(format!("bad {} value `{field}`", HEADER[k + 1])))?;
        }
        if vals[0] <= 0.0 {
            return Err(Error::NonPositiveLoad {
                line,
                load: vals[0],
            });
        }
        rows.push((
            line,
            Observation {
                timestamp,
                load: vals[0],
                temperature: vals[1],
                humidity: vals[2],
                ghi: vals[3],
                wind_speed: vals[4],
            },
        ));
    }

    rows.sort_by_key(|(_, o)| o.timestamp);
    let mut observations: Vec<Observation> = Vec::with_capacity(rows.len());
    let mut imputed_hours = 0usize;
    for (line, obs) in rows {
        if let Some(prev) = observations.last().copied() {
            let step = (obs.timestamp - prev.timestamp).num_hours();
            if step == 0 {
                return Err(Error::DuplicateTimestamp {
                    line,
                    timestamp: obs.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                });
            }
            let missing = step - 1;
            if missing > opts.max_gap_hours {
                return Err(Error::GapTooLong {
                    after: prev.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                    hours: missing,
                    limit: opts.max_gap_hours,
                });
            }
            if missing > 0 {
                warn!(
                    "imputing {missing} missing hour(s) after {}",
                    prev.timestamp.format(TIMESTAMP_FORMAT)
                );
                for k in 1..step {
                    let w = k as f64 / step as f64;
                    let lerp = |a: f64, b: f64| a + (b - a) * w;
                    observations.push(Observation {
                        timestamp: prev.timestamp + Duration::hours(k),
                        load: lerp(prev.load, obs.load),
                        temperature: lerp(prev.temperature, obs.temperature),
                        humidity: lerp(prev.humidity, obs.humidity),
                        ghi: lerp(prev.ghi, obs.ghi),
                        wind_speed: lerp(prev.wind_speed, obs.wind_speed),
                    });
                }
                imputed_hours += missing as usize;
            }
        }
        observations.push(obs);
    }

    Ok(Dataset {
        observations,
        imputed_hours,
    })
}

/// Writes the ingestion schema; floats use shortest round-trip formatting.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for o in dataset.observations() {
        w.write_record([
            o.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            o.load.to_string(),
            o.temperature.to_string(),
            o.humidity.to_string(),
            o.ghi.to_string(),
            o.wind_speed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_rows(n: usize) -> String {
        let mut s = String::from("timestamp,load,temperature,humidity,ghi,wind_speed\n");
        let start = NaiveDateTime::parse_from_str("2014-01-01T00:00:00", TIMESTAMP_FORMAT).unwrap();
        for i in 0..n {
            let ts = start + Duration::hours(i as i64);
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                ts.format(TIMESTAMP_FORMAT),
                100.0 + i as f64,
                20.5,
                60.0,
                if i % 24 > 6 { 300.0 } else { 0.0 },
                3.25
            ));
        }
        s
    }

    #[test]
    fn well_formed_48_rows() {
        let ds = read_dataset(csv_rows(48).as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.len(), 48);
        assert_eq!(ds.imputed_hours(), 0);
        assert_eq!(ds.observations()[47].load, 147.0);
    }

    #[test]
    fn duplicate_timestamp_names_row() {
        let mut s = csv_rows(5);
        s.push_str("2014-01-01T02:00:00,99,20,60,0,3\n");
        match read_dataset(s.as_bytes(), &LoadOptions::default()) {
            Err(Error::DuplicateTimestamp { line, timestamp }) => {
                assert_eq!(line, 7);
                assert_eq!(timestamp, "2014-01-01T02:00:00");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn zero_load_rejected() {
        let s = csv_rows(4).replace("2014-01-01T02:00:00,102,", "2014-01-01T02:00:00,0,");
        match read_dataset(s.as_bytes(), &LoadOptions::default()) {
            Err(Error::NonPositiveLoad { line, load }) => {
                assert_eq!(line, 4);
                assert_eq!(load, 0.0);
            }
            other => panic!("expected non-positive load error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let s = csv_rows(4).replace("2014-01-01T03:00:00,103,", "2014-01-01T03:00:00,abc,");
        match read_dataset(s.as_bytes(), &LoadOptions::default()) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected malformed row, got {other:?}"),
        }
    }

    #[test]
    fn short_gap_imputed_long_gap_rejected() {
        let full = csv_rows(10);
        let lines: Vec<&str> = full.lines().collect();
        // drop hours 3,4 (2 missing)
        let short: Vec<&str> = lines
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 4 && *i != 5)
            .map(|(_, l)| *l)
            .collect();
        let ds = read_dataset(short.join("\n").as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.imputed_hours(), 2);
        assert!((ds.observations()[3].load - 103.0).abs() < 1e-12);
        assert!((ds.observations()[4].load - 104.0).abs() < 1e-12);

        let long: Vec<&str> = lines
            .iter()
            .enumerate()
            .filter(|(i, _)| !(3..=6).contains(i))
            .map(|(_, l)| *l)
            .collect();
        assert!(matches!(
            read_dataset(long.join("\n").as_bytes(), &LoadOptions::default()),
            Err(Error::GapTooLong { hours: 4, .. })
        ));
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let full = csv_rows(3);
        let mut lines: Vec<&str> = full.lines().collect();
        lines.swap(1, 3);
        let ds = read_dataset(lines.join("\n").as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.loads(), vec![100.0, 101.0, 102.0]);
    }

    #[test]
    fn round_trip_reproduces_file() {
        let src = csv_rows(30);
        let ds = read_dataset(src.as_bytes(), &LoadOptions::default()).unwrap();
        let mut out = Vec::new();
        write_dataset(&ds, &mut out).unwrap();
        let again = read_dataset(out.as_slice(), &LoadOptions::default()).unwrap();
        assert_eq!(ds, again);
        assert_eq!(String::from_utf8(out).unwrap(), src);
    }

    #[test]
    fn comment_lines_skipped_and_header_checked() {
        let s = format!("# generated at some time\n{}", csv_rows(2));
        assert_eq!(read_dataset(s.as_bytes(), &LoadOptions::default()).unwrap().len(), 2);
        let bad = csv_rows(2).replace("wind_speed", "wind");
        assert!(matches!(
            read_dataset(bad.as_bytes(), &LoadOptions::default()),
            Err(Error::MalformedRow { line: 1, .. })
        ));
    }
}
