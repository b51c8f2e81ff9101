use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};
use crate::forecast::WindRecord;

pub const WIND_HEADER: [&str; 5] = [
    "timestamp",
    "wind_speed",
    "wind_direction",
    "temperature",
    "active_power",
];

pub fn load_wind_csv(path: &Path) -> Result<Vec<WindRecord>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    read_wind_csv(std::fs::File::open(path)?)
}

/// Parses the wind CSV contract. Empty fields become missing values.
pub fn read_wind_csv<R: Read>(reader: R) -> Result<Vec<WindRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(WIND_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", WIND_HEADER.join(",")),
        });
    }
    let mut out: Vec<WindRecord> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { line, message };
        if row.len() != WIND_HEADER.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                WIND_HEADER.len(),
                row.len()
            )));
        }
        let timestamp = DateTime::parse_from_rfc3339(row[0].trim())
            .map_err(|e| bad(format!("timestamp `{}`: {e}", &row[0])))?
            .with_timezone(&Utc);
        let field = |k: usize| -> Result<Option<f64>> {
            let s = row[k].trim();
            if s.is_empty() {
                return Ok(None);
            }
            let v: f64 = s
                .parse()
                .map_err(|_| bad(format!("{} `{s}` is not a number", WIND_HEADER[k])))?;
            if !v.is_finite() {
                return Err(bad(format!("{} is not finite", WIND_HEADER[k])));
            }
            Ok(Some(v))
        };
        let rec = WindRecord {
            timestamp,
            wind_speed: field(1)?,
            wind_direction: field(2)?,
            temperature: field(3)?,
            active_power: field(4)?,
        };
        if rec.wind_speed.is_some_and(|v| v < 0.0) {
            return Err(bad("negative wind speed".into()));
        }
        if out.last().is_some_and(|p| p.timestamp >= rec.timestamp) {
            return Err(Error::Ordering { line });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_wind_csv<W: Write>(writer: W, records: &[WindRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(WIND_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            opt(r.wind_speed),
            opt(r.wind_direction),
            opt(r.temperature),
            opt(r.active_power),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_wind_csv(path: &Path, records: &[WindRecord]) -> Result<()> {
    write_wind_csv(std::fs::File::create(path)?, records)
}

/// Multiplies every power value by `factor`.
pub fn scale_power(records: &mut [WindRecord], factor: f64) {
    for r in records {
        r.active_power = r.active_power.map(|p| p * factor);
    }
}

/// Rescales linearly so that the largest power equals `p_max` when it
/// exceeds it. Returns the factor applied.
pub fn fit_to_capacity(records: &mut [WindRecord], p_max: f64) -> f64 {
    let peak = records
        .iter()
        .filter_map(|r| r.active_power)
        .fold(0.0f64, f64::max);
    let factor = if peak > p_max { p_max / peak } else { 1.0 };
    scale_power(records, factor);
    factor
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_is_empty() {
        let s = "timestamp,wind_speed,wind_direction,temperature,active_power\n";
        assert!(read_wind_csv(s.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn empty_power_is_missing() {
        let s = "timestamp,wind_speed,wind_direction,temperature,active_power\n2024-01-01T00:00:00Z,5,90,10,\n";
        let r = read_wind_csv(s.as_bytes()).unwrap();
        assert_eq!(r[0].active_power, None);
        assert_eq!(r[0].wind_speed, Some(5.0));
    }

    #[test]
    fn malformed_row_reports_line() {
        let s = "timestamp,wind_speed,wind_direction,temperature,active_power\n2024-01-01T00:00:00Z,5,90,10,1\n2024-01-01T00:10:00Z,x,90,10,1\n";
        match read_wind_csv(s.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_order_rows() {
        let s = "timestamp,wind_speed,wind_direction,temperature,active_power\n2024-01-01T00:10:00Z,5,90,10,1\n2024-01-01T00:00:00Z,5,90,10,1\n";
        assert!(matches!(
            read_wind_csv(s.as_bytes()),
            Err(Error::Ordering { line: 3 })
        ));
    }

    #[test]
    fn capacity_fit() {
        let s = "timestamp,wind_speed,wind_direction,temperature,active_power\n2024-01-01T00:00:00Z,5,90,10,200\n2024-01-01T00:10:00Z,5,90,10,100\n";
        let mut r = read_wind_csv(s.as_bytes()).unwrap();
        assert_eq!(fit_to_capacity(&mut r, 50.0), 0.25);
        assert_eq!(r[0].active_power, Some(50.0));
        assert_eq!(r[1].active_power, Some(25.0));
    }
}
