use std::f64::consts::TAU;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydrology::InflowSeries;

/// One Fourier seasonality: `Σ_n a_n cos(2πnt/P) + b_n sin(2πnt/P)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierBlock {
    /// Period [hours].
    pub period: f64,
    pub order: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl FourierBlock {
    pub fn value(&self, t: f64) -> f64 {
        let w = TAU * t / self.period;
        self.a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(i, (a, b))| {
                let x = w * (i + 1) as f64;
                a * x.cos() + b * x.sin()
            })
            .sum()
    }
}

/// Fitted additive inflow model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    /// Timestamp of t = 0 (first training sample).
    pub epoch: DateTime<Utc>,
    /// Number of hourly training samples; training covers `[0, train_len)`.
    pub train_len: usize,
    /// Initial growth rate [m³/s per hour].
    pub k0: f64,
    /// Initial offset [m³/s].
    pub m0: f64,
    /// Changepoint times [hours since epoch], strictly increasing.
    pub changepoints: Vec<f64>,
    /// Growth-rate change at each changepoint.
    pub delta: Vec<f64>,
    /// Offset change at each changepoint, `-t_j * delta_j`.
    pub gamma: Vec<f64>,
    /// Residual standard deviation [m³/s].
    pub sigma_obs: f64,
    /// Laplace scale for sampled future rate changes (mean |delta|).
    pub cp_scale: f64,
    pub seasonalities: Vec<FourierBlock>,
}

impl AdditiveModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("additive model: {m}")));
        let m = self.changepoints.len();
        if self.delta.len() != m || self.gamma.len() != m {
            return bad(format!(
                "{m} changepoints but {} deltas and {} gammas",
                self.delta.len(),
                self.gamma.len()
            ));
        }
        if self.train_len == 0 {
            return bad("empty training window".into());
        }
        for w in self.changepoints.windows(2) {
            if w[1] <= w[0] {
                return bad("changepoints must be strictly increasing".into());
            }
        }
        if let (Some(first), Some(last)) = (self.changepoints.first(), self.changepoints.last()) {
            if *first < 0.0 || *last >= self.train_len as f64 {
                return bad("changepoints must lie inside the training window".into());
            }
        }
        for ((t, d), g) in self.changepoints.iter().zip(&self.delta).zip(&self.gamma) {
            let expected = -t * d;
            if (g - expected).abs() > 1e-9 * expected.abs().max(1e-12) {
                return bad(format!("gamma {g} breaks continuity at t = {t}"));
            }
        }
        for block in &self.seasonalities {
            if !(block.period > 0.0) || block.order == 0 {
                return bad("seasonality needs period > 0 and order >= 1".into());
            }
            if block.a.len() != block.order || block.b.len() != block.order {
                return bad(format!(
                    "seasonality of order {} has {} / {} coefficients",
                    block.order,
                    block.a.len(),
                    block.b.len()
                ));
            }
        }
        if !(self.sigma_obs >= 0.0) || !(self.cp_scale >= 0.0) {
            return bad("sigma_obs and cp_scale must be non-negative".into());
        }
        let all = [self.k0, self.m0, self.sigma_obs, self.cp_scale]
            .into_iter()
            .chain(self.delta.iter().copied())
            .chain(self.seasonalities.iter().flat_map(|b| b.a.iter().chain(&b.b).copied()));
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    /// Piecewise-linear trend `g(t) = k(t) t + m(t)` where each changepoint
    /// switches on at `t >= t_j`.
    pub fn evaluate_trend(&self, t: f64) -> f64 {
        let mut k = self.k0;
        let mut m = self.m0;
        for ((tj, d), g) in self.changepoints.iter().zip(&self.delta).zip(&self.gamma) {
            if *tj <= t {
                k += d;
                m += g;
            } else {
                break;
            }
        }
        k * t + m
    }

    pub fn evaluate_seasonality(&self, t: f64) -> f64 {
        self.seasonalities.iter().map(|b| b.value(t)).sum()
    }

    /// `g(t) + s(t)`, unclamped.
    pub fn predict(&self, t: f64) -> f64 {
        self.evaluate_trend(t) + self.evaluate_seasonality(t)
    }

    /// Hours since the epoch.
    pub fn time_of(&self, ts: DateTime<Utc>) -> f64 {
        (ts - self.epoch).num_seconds() as f64 / 3600.0
    }

    pub fn train_end(&self) -> DateTime<Utc> {
        self.epoch + Duration::hours(self.train_len as i64)
    }

    /// Historical changepoint frequency per hour.
    pub fn changepoint_rate(&self) -> f64 {
        self.changepoints.len() as f64 / self.train_len as f64
    }

    /// In-sample residuals against a series sharing the model's epoch grid.
    pub fn residuals(&self, series: &InflowSeries) -> Vec<f64> {
        let t0 = self.time_of(series.start());
        series
            .values()
            .iter()
            .enumerate()
            .map(|(i, y)| y - self.predict(t0 + i as f64))
            .collect()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("serialising model: {e}")))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: Self =
            toml::from_str(text).map_err(|e| Error::Format(format!("parsing model: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}
