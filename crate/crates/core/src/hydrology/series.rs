use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, Timelike, Utc};

use crate::error::{Error, Result};

/// Hourly inflow record [m³/s] starting at an hour-aligned UTC timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct InflowSeries {
    start: DateTime<Utc>,
    values: Vec<f64>,
}

pub(crate) fn check_hour_aligned(ts: DateTime<Utc>) -> Result<()> {
    if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
        return Err(Error::InvalidInput(format!(
            "timestamp {ts} is not hour-aligned"
        )));
    }
    Ok(())
}

impl InflowSeries {
    pub fn new(start: DateTime<Utc>, values: Vec<f64>) -> Result<Self> {
        check_hour_aligned(start)?;
        if values.is_empty() {
            return Err(Error::InvalidInput("inflow series is empty".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "inflow[{i}] = {v} must be finite and non-negative"
            )));
        }
        Ok(Self { start, values })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    /// First hour after the last sample.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.values.len())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::hours(index as i64)
    }

    /// Index of `ts` within the series, if it falls on a sample.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let hours = hours_between(self.start, ts)?;
        (hours >= 0 && (hours as usize) < self.values.len()).then_some(hours as usize)
    }

    /// Samples in `[from, to)`.
    pub fn window(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Result<InflowSeries> {
        let lo = hours_between(self.start, from)
            .filter(|h| *h >= 0)
            .ok_or_else(|| Error::InvalidInput(format!("window start {from} outside series")))?
            as usize;
        let hi = hours_between(self.start, to)
            .filter(|h| *h >= 0 && (*h as usize) <= self.values.len())
            .ok_or_else(|| Error::InvalidInput(format!("window end {to} outside series")))?
            as usize;
        if hi <= lo {
            return Err(Error::InvalidInput(format!("empty window {from} .. {to}")));
        }
        InflowSeries::new(from, self.values[lo..hi].to_vec())
    }

    /// Series extended with `more` samples immediately after the end.
    pub fn extended(&self, more: &[f64]) -> Result<InflowSeries> {
        let mut values = Vec::with_capacity(self.values.len() + more.len());
        values.extend_from_slice(&self.values);
        values.extend_from_slice(more);
        InflowSeries::new(self.start, values)
    }
}

/// Whole hours from `a` to `b`, `None` if not a whole number of hours.
pub(crate) fn hours_between(a: DateTime<Utc>, b: DateTime<Utc>) -> Option<i64> {
    let secs = (b - a).num_seconds();
    (secs % 3600 == 0 && (b - a).subsec_nanos() == 0).then_some(secs / 3600)
}

pub(crate) fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub(crate) fn parse_timestamp(raw: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp `{raw}`: {e}"))
}

/// Load an inflow CSV with header `timestamp,inflow_m3s`.
pub fn load_inflow_csv(path: impl AsRef<Path>) -> Result<InflowSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "inflow_m3s" {
        return Err(parse_err(
            1,
            format!("expected header `timestamp,inflow_m3s`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut start: Option<DateTime<Utc>> = None;
    let mut prev: Option<DateTime<Utc>> = None;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, got {}", record.len())));
        }
        let ts = parse_timestamp(&record[0]).map_err(|m| parse_err(line, m))?;
        check_hour_aligned(ts).map_err(|e| parse_err(line, e.to_string()))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad inflow value `{}`", &record[1])))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Validation {
                path: path.to_path_buf(),
                line,
                message: format!("inflow must be finite and non-negative, got {}", &record[1]),
            });
        }
        if let Some(p) = prev {
            let expected = p + Duration::hours(1);
            if ts == p {
                return Err(Error::DuplicateTimestamp {
                    path: path.to_path_buf(),
                    line,
                    timestamp: ts,
                });
            }
            if ts < p {
                return Err(parse_err(line, format!("timestamp {ts} is before previous row {p}")));
            }
            if ts != expected {
                return Err(Error::Gap {
                    path: path.to_path_buf(),
                    line,
                    first_missing: expected,
                    last_missing: ts - Duration::hours(1),
                });
            }
        } else {
            start = Some(ts);
        }
        prev = Some(ts);
        values.push(value);
    }
    let start = start.ok_or_else(|| parse_err(1, "no data rows".into()))?;
    InflowSeries::new(start, values)
}

pub fn write_inflow_csv(path: impl AsRef<Path>, series: &InflowSeries) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "timestamp,inflow_m3s").map_err(io)?;
    for (i, v) in series.values().iter().enumerate() {
        writeln!(out, "{},{}", format_timestamp(series.timestamp(i)), v).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "timestamp,inflow_m3s\n";

    #[test]
    fn three_rows() {
        let f = write(&format!(
            "{HEADER}2000-01-01T00:00:00Z,1.0\n2000-01-01T01:00:00Z,2.5\n2000-01-01T02:00:00Z,0\n"
        ));
        let s = load_inflow_csv(f.path()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values(), &[1.0, 2.5, 0.0]);
        assert_eq!(s.start(), Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap());
    }

    #[test]
    fn missing_hour_is_a_gap() {
        let f = write(&format!(
            "{HEADER}2000-01-01T00:00:00Z,1.0\n2000-01-01T01:00:00Z,2.0\n2000-01-01T04:00:00Z,3.0\n"
        ));
        match load_inflow_csv(f.path()).unwrap_err() {
            Error::Gap {
                line,
                first_missing,
                last_missing,
                ..
            } => {
                assert_eq!(line, 4);
                assert_eq!(first_missing, Utc.with_ymd_and_hms(2000, 1, 1, 2, 0, 0).unwrap());
                assert_eq!(last_missing, Utc.with_ymd_and_hms(2000, 1, 1, 3, 0, 0).unwrap());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_value_rejected() {
        let f = write(&format!("{HEADER}2000-01-01T00:00:00Z,-5.0\n"));
        assert!(matches!(
            load_inflow_csv(f.path()).unwrap_err(),
            Error::Validation { line: 2, .. }
        ));
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let f = write(&format!(
            "{HEADER}2000-01-01T00:00:00Z,1.0\n2000-01-01T00:00:00Z,1.0\n"
        ));
        assert!(matches!(
            load_inflow_csv(f.path()).unwrap_err(),
            Error::DuplicateTimestamp { line: 3, .. }
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write(&format!(
            "{HEADER}2000-01-01T00:00:00Z,1.0\n2000-01-01T01:00:00Z,abc\n"
        ));
        match load_inflow_csv(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = write(&format!("{HEADER}2000-01-01T00:30:00Z,1.0\n"));
        assert!(matches!(
            load_inflow_csv(f.path()).unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn write_then_load() {
        let start = Utc.with_ymd_and_hms(1999, 12, 31, 22, 0, 0).unwrap();
        let s = InflowSeries::new(start, vec![1.25, 0.1, 3.0e-7, 42.0]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_inflow_csv(f.path(), &s).unwrap();
        assert_eq!(load_inflow_csv(f.path()).unwrap(), s);
    }

    #[test]
    fn window_and_extend() {
        let start = Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap();
        let s = InflowSeries::new(start, (0..10).map(f64::from).collect()).unwrap();
        let w = s.window(s.timestamp(2), s.timestamp(5)).unwrap();
        assert_eq!(w.values(), &[2.0, 3.0, 4.0]);
        assert_eq!(w.start(), s.timestamp(2));
        let e = w.extended(&[9.0]).unwrap();
        assert_eq!(e.len(), 4);
        assert_eq!(s.index_of(s.timestamp(9)), Some(9));
        assert_eq!(s.index_of(s.end()), None);
    }
}
