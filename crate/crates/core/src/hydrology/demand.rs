use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};

use super::calendar::{day_slot, hour_slot, DAYS_PER_PROFILE, HOURS_PER_PROFILE};
use super::series::InflowSeries;
use crate::error::{Error, Result};

/// Agricultural demand w(t) [m³/s], one value per hour of a 365-day year.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    hourly: Vec<f64>,
}

impl DemandProfile {
    pub fn hourly(values: Vec<f64>) -> Result<Self> {
        if values.len() != HOURS_PER_PROFILE {
            return Err(Error::InvalidInput(format!(
                "hourly demand profile needs {HOURS_PER_PROFILE} values, got {}",
                values.len()
            )));
        }
        check_values(&values)?;
        Ok(Self { hourly: values })
    }

    /// Daily values, each repeated over the 24 hours of its day.
    pub fn daily(values: &[f64]) -> Result<Self> {
        if values.len() != DAYS_PER_PROFILE {
            return Err(Error::InvalidInput(format!(
                "daily demand profile needs {DAYS_PER_PROFILE} values, got {}",
                values.len()
            )));
        }
        check_values(values)?;
        let hourly = values
            .iter()
            .flat_map(|v| std::iter::repeat_n(*v, 24))
            .collect();
        Ok(Self { hourly })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::hourly(vec![value; HOURS_PER_PROFILE])
    }

    pub fn values(&self) -> &[f64] {
        &self.hourly
    }

    pub fn max(&self) -> f64 {
        self.hourly.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn at(&self, ts: DateTime<Utc>) -> f64 {
        self.hourly[hour_slot(ts)]
    }

    /// Demand over `len` hours starting at `from`.
    pub fn horizon(&self, from: DateTime<Utc>, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| self.at(from + Duration::hours(i as i64)))
            .collect()
    }

    /// Load `hour_of_year,demand_m3s` (8760 rows) or `day_of_year,demand_m3s`
    /// (365 rows). Indices are 0-based and must cover every slot once.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
        let slots = match (headers.get(0), headers.get(1), headers.len()) {
            (Some("hour_of_year"), Some("demand_m3s"), 2) => HOURS_PER_PROFILE,
            (Some("day_of_year"), Some("demand_m3s"), 2) => DAYS_PER_PROFILE,
            _ => {
                return Err(parse_err(
                    1,
                    "expected header `hour_of_year,demand_m3s` or `day_of_year,demand_m3s`".into(),
                ))
            }
        };
        let mut values = vec![f64::NAN; slots];
        for record in reader.records() {
            let record = record.map_err(|e| {
                parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let index: usize = record[0]
                .parse()
                .map_err(|_| parse_err(line, format!("bad index `{}`", &record[0])))?;
            let value: f64 = record[1]
                .parse()
                .map_err(|_| parse_err(line, format!("bad demand `{}`", &record[1])))?;
            if index >= slots {
                return Err(parse_err(line, format!("index {index} out of range 0..{slots}")));
            }
            if !values[index].is_nan() {
                return Err(parse_err(line, format!("duplicate index {index}")));
            }
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Validation {
                    path: path.to_path_buf(),
                    line,
                    message: format!("demand must be finite and non-negative, got {value}"),
                });
            }
            values[index] = value;
        }
        if let Some(missing) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Format(format!(
                "{}: demand index {missing} missing",
                path.display()
            )));
        }
        if slots == DAYS_PER_PROFILE {
            Self::daily(&values)
        } else {
            Self::hourly(values)
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "hour_of_year,demand_m3s").map_err(io)?;
        for (i, v) in self.hourly.iter().enumerate() {
            writeln!(out, "{i},{v}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        Some(v) => Err(Error::InvalidInput(format!(
            "demand values must be finite and non-negative, got {v}"
        ))),
        None => Ok(()),
    }
}

/// Daily cyclostationary mean inflow, one value per 365-day slot [m³/s].
#[derive(Debug, Clone, PartialEq)]
pub struct DailyProfile {
    daily: Vec<f64>,
}

impl DailyProfile {
    pub fn values(&self) -> &[f64] {
        &self.daily
    }

    pub fn at(&self, ts: DateTime<Utc>) -> f64 {
        self.daily[day_slot(ts)]
    }

    pub fn horizon(&self, from: DateTime<Utc>, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| self.at(from + Duration::hours(i as i64)))
            .collect()
    }
}

/// Mean inflow per day-of-year across every year in `history`.
pub fn climatology(history: &InflowSeries) -> Result<DailyProfile> {
    if history.len() < HOURS_PER_PROFILE {
        return Err(Error::InsufficientData(format!(
            "climatology needs at least one year ({HOURS_PER_PROFILE} h) of history, got {} h",
            history.len()
        )));
    }
    let mut sums = vec![0.0; DAYS_PER_PROFILE];
    let mut counts = vec![0usize; DAYS_PER_PROFILE];
    for (i, v) in history.values().iter().enumerate() {
        let slot = day_slot(history.timestamp(i));
        sums[slot] += v;
        counts[slot] += 1;
    }
    if let Some(day) = counts.iter().position(|c| *c == 0) {
        return Err(Error::InsufficientData(format!(
            "history has no samples for day-of-year slot {day}"
        )));
    }
    let daily = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| s / *c as f64)
        .collect();
    Ok(DailyProfile { daily })
}
