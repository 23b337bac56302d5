use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::model::AdditiveModel;
use crate::error::{Error, Result};
use crate::hydrology::InflowSeries;
use crate::rng::{substream, TAG_SCENARIO_COLUMN};

/// H×K inflow scenarios [m³/s], stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMatrix {
    origin: DateTime<Utc>,
    horizon: usize,
    count: usize,
    data: Vec<f64>,
}

impl ScenarioMatrix {
    pub fn from_columns(origin: DateTime<Utc>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let count = columns.len();
        let horizon = columns.first().map_or(0, Vec::len);
        if count == 0 || horizon == 0 {
            return Err(Error::InvalidInput("scenario matrix must be non-empty".into()));
        }
        if columns.iter().any(|c| c.len() != horizon) {
            return Err(Error::DimensionMismatch(
                "scenario columns have different lengths".into(),
            ));
        }
        let data: Vec<f64> = columns.into_iter().flatten().collect();
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "scenario inflow {v} must be finite and non-negative"
            )));
        }
        Ok(Self {
            origin,
            horizon,
            count,
            data,
        })
    }

    /// A one-column matrix holding a single forecast.
    pub fn single(origin: DateTime<Utc>, values: Vec<f64>) -> Result<Self> {
        Self::from_columns(origin, vec![values])
    }

    pub fn origin(&self) -> DateTime<Utc> {
        self.origin
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.data[k * self.horizon..(k + 1) * self.horizon]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.horizon)
    }

    pub fn value(&self, step: usize, k: usize) -> f64 {
        self.data[k * self.horizon + step]
    }

    /// The same scenarios in a different column order.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.count {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        Self::from_columns(
            self.origin,
            order.iter().map(|k| self.column(*k).to_vec()).collect(),
        )
    }

    /// CSV with header `step,k1..kK`, one row per step.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        write!(out, "step").map_err(io)?;
        for k in 1..=self.count {
            write!(out, ",k{k}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
        for t in 0..self.horizon {
            write!(out, "{t}").map_err(io)?;
            for k in 0..self.count {
                write!(out, ",{}", self.value(t, k)).map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// First column as an inflow series starting at the origin.
    pub fn to_series(&self) -> Result<InflowSeries> {
        InflowSeries::new(self.origin, self.column(0).to_vec())
    }
}

/// Which uncertainty sources to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SamplingOptions {
    /// Gaussian observation noise with the fitted residual spread.
    pub noise: bool,
    /// Future trend changepoints at the historical rate and magnitude.
    pub changepoints: bool,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            noise: true,
            changepoints: true,
        }
    }
}

impl SamplingOptions {
    pub const NOMINAL: SamplingOptions = SamplingOptions {
        noise: false,
        changepoints: false,
    };
}

fn origin_offset(model: &AdditiveModel, origin: DateTime<Utc>) -> Result<i64> {
    let secs = (origin - model.epoch).num_seconds();
    if secs % 3600 != 0 {
        return Err(Error::InvalidInput(format!(
            "forecast origin {origin} is not on the model's hourly grid"
        )));
    }
    Ok(secs / 3600)
}

/// Noise-free, changepoint-free forecast `max(0, g + s)` over `horizon` hours.
pub fn nominal_forecast(
    model: &AdditiveModel,
    origin: DateTime<Utc>,
    horizon: usize,
) -> Result<Vec<f64>> {
    let t0 = origin_offset(model, origin)?;
    Ok((0..horizon)
        .map(|i| model.predict((t0 + i as i64) as f64).max(0.0))
        .collect())
}

/// Laplace(0, b) by inversion.
fn laplace(rng: &mut impl Rng, b: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

pub fn sample_scenarios(
    model: &AdditiveModel,
    origin: DateTime<Utc>,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<ScenarioMatrix> {
    sample_scenarios_with(model, origin, horizon, count, seed, SamplingOptions::default())
}

/// Draw `count` inflow trajectories of `horizon` hours from `origin`.
///
/// Each column is the nominal prediction plus (a) trend changepoints arriving
/// after the training window as a Bernoulli process with the historical
/// per-hour rate and Laplace(0, cp_scale) magnitudes and (b) i.i.d. Gaussian
/// noise with standard deviation `sigma_obs`. Entries are clamped at zero.
/// Column `k` uses the random stream `(seed, k)` only, so the result does not
/// depend on the thread count.
pub fn sample_scenarios_with(
    model: &AdditiveModel,
    origin: DateTime<Utc>,
    horizon: usize,
    count: usize,
    seed: u64,
    options: SamplingOptions,
) -> Result<ScenarioMatrix> {
    if horizon == 0 || count == 0 {
        return Err(Error::InvalidInput(format!(
            "scenario matrix needs H >= 1 and K >= 1, got H = {horizon}, K = {count}"
        )));
    }
    let t0 = origin_offset(model, origin)?;
    let nominal: Vec<f64> = (0..horizon)
        .map(|i| model.predict((t0 + i as i64) as f64))
        .collect();
    let rate = model.changepoint_rate();
    let with_cps = options.changepoints && rate > 0.0 && model.cp_scale > 0.0;
    let with_noise = options.noise && model.sigma_obs > 0.0;
    let noise = Normal::new(0.0, model.sigma_obs)
        .map_err(|e| Error::InvalidInput(format!("sigma_obs: {e}")))?;
    let cp_from = model.train_len as i64;
    let cp_to = t0 + horizon as i64;

    let data: Vec<f64> = (0..count)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = substream(seed, TAG_SCENARIO_COLUMN, k as u64);
            let mut column = nominal.clone();
            if with_cps {
                let mut events = Vec::new();
                for tau in cp_from..cp_to {
                    if rng.random::<f64>() < rate {
                        events.push((tau, laplace(&mut rng, model.cp_scale)));
                    }
                }
                for (i, v) in column.iter_mut().enumerate() {
                    let t = t0 + i as i64;
                    for (tau, d) in events.iter().take_while(|(tau, _)| *tau <= t) {
                        *v += d * (t - tau) as f64;
                    }
                }
            }
            if with_noise {
                for v in column.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            }
            column.into_iter().map(|v| v.max(0.0))
        })
        .collect();

    Ok(ScenarioMatrix {
        origin,
        horizon,
        count,
        data,
    })
}
