use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{AdditiveModel, FourierBlock};
use crate::error::{Error, Result};
use crate::hydrology::InflowSeries;
use crate::kv::KeyValues;

const FIT_KEYS: [&str; 4] = ["changepoints", "changepoint_range", "seasonalities", "ridge"];

/// Least-squares fitting options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Number of trend changepoints M.
    pub changepoints: usize,
    /// Changepoints are spread uniformly over this leading fraction of the
    /// training window.
    pub changepoint_range: f64,
    /// `(period [hours], order)` per seasonality block.
    pub seasonalities: Vec<(f64, usize)>,
    /// Ridge penalty `λ‖δ‖²` on the rate changes, with `δ` in m³/s per hour
    /// and the penalty in squared-residual units. The default is strong
    /// enough that, on multi-year hourly records, changepoints follow the
    /// trend instead of absorbing seasonal shape that then extrapolates badly.
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            changepoints: 25,
            changepoint_range: 0.8,
            seasonalities: vec![(8760.0, 10), (24.0, 3)],
            ridge: 1e9,
        }
    }
}

impl FitConfig {
    /// Read a flat `key = value` file with every key of the struct;
    /// `seasonalities` is a comma-separated list of `period:order` pairs,
    /// e.g. `8760:10, 24:3`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        kv.deny_unknown(&FIT_KEYS)?;
        for key in FIT_KEYS {
            kv.require_str(key)?;
        }
        let changepoints = kv.require_f64("changepoints")?;
        if changepoints < 0.0 || changepoints.fract() != 0.0 {
            return Err(Error::Config(format!(
                "{}: changepoints must be a non-negative integer, got {changepoints}",
                kv.path().display()
            )));
        }
        let seasonalities = parse_seasonalities(kv.require_str("seasonalities")?).map_err(|m| {
            Error::Config(format!("{}: seasonalities: {m}", kv.path().display()))
        })?;
        let cfg = Self {
            changepoints: changepoints as usize,
            changepoint_range: kv.require_f64("changepoint_range")?,
            seasonalities,
            ridge: kv.require_f64("ridge")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Text accepted by [`FitConfig::load`].
    pub fn to_kv_string(&self) -> String {
        let seasonalities = self
            .seasonalities
            .iter()
            .map(|(p, n)| format!("{p:?}:{n}"))
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "changepoints = {}\nchangepoint_range = {:?}\nseasonalities = {seasonalities}\nridge = {:?}\n",
            self.changepoints, self.changepoint_range, self.ridge
        )
    }

    fn parameter_count(&self) -> usize {
        2 + self.changepoints + self.seasonalities.iter().map(|(_, n)| 2 * n).sum::<usize>()
    }

    fn validate(&self) -> Result<()> {
        if !(self.changepoint_range > 0.0 && self.changepoint_range <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "changepoint_range must be in (0, 1], got {}",
                self.changepoint_range
            )));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::InvalidInput("ridge must be finite and >= 0".into()));
        }
        for (p, n) in &self.seasonalities {
            if !(*p > 0.0) || *n == 0 {
                return Err(Error::InvalidInput(format!(
                    "seasonality (period {p}, order {n}) needs period > 0 and order >= 1"
                )));
            }
        }
        Ok(())
    }
}

fn parse_seasonalities(text: &str) -> std::result::Result<Vec<(f64, usize)>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|item| !item.is_empty())
        .map(|item| {
            let (p, n) = item
                .split_once(':')
                .ok_or_else(|| format!("`{item}` is not `period:order`"))?;
            let period = p.trim().parse().map_err(|_| format!("bad period `{p}`"))?;
            let order = n.trim().parse().map_err(|_| format!("bad order `{n}`"))?;
            Ok((period, order))
        })
        .collect()
}

/// Summary of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub samples: usize,
    pub parameters: usize,
    pub residual_std: f64,
    pub residual_rms: f64,
    /// RMS of the trend component over the training window.
    pub trend_rms: f64,
    /// RMS of each seasonality block, in configuration order.
    pub seasonality_rms: Vec<f64>,
    /// Reciprocal condition number of the equilibrated normal matrix.
    pub rcond: f64,
}

pub fn fit(history: &InflowSeries, cfg: &FitConfig) -> Result<AdditiveModel> {
    fit_with_diagnostics(history, cfg).map(|(m, _)| m)
}

/// Changepoint hours, uniformly spaced over the leading fraction of the window.
fn changepoint_grid(n: usize, cfg: &FitConfig) -> Result<Vec<f64>> {
    let m = cfg.changepoints;
    let span = cfg.changepoint_range * (n - 1) as f64;
    let grid: Vec<f64> = (1..=m)
        .map(|j| (j as f64 * span / m as f64).round())
        .collect();
    let mut prev = 0.0;
    for t in &grid {
        if *t <= prev || *t >= (n - 1) as f64 {
            return Err(Error::Fit(format!(
                "{m} changepoints do not fit in {n} samples; use fewer changepoints"
            )));
        }
        prev = *t;
    }
    Ok(grid)
}

/// Fill `row` with the scaled regressors at hour `t`.
///
/// Layout: `[1, τ, (τ - τ_j)+ ..., cos/sin pairs ...]` with `τ = t / scale`.
fn regressors(t: f64, scale: f64, cps: &[f64], seasons: &[(f64, usize)], row: &mut [f64]) {
    let tau = t / scale;
    row[0] = 1.0;
    row[1] = tau;
    let mut i = 2;
    for tj in cps {
        row[i] = if t >= *tj { tau - tj / scale } else { 0.0 };
        i += 1;
    }
    for (period, order) in seasons {
        let w = TAU * t / period;
        for n in 1..=*order {
            let x = w * n as f64;
            row[i] = x.cos();
            row[i + 1] = x.sin();
            i += 2;
        }
    }
}

/// Regularised least-squares fit of trend and seasonality.
///
/// The design is linear once changepoint locations are fixed, so this is a
/// single normal-equation solve. Time is rescaled to `[0, 1]` and columns are
/// equilibrated before factorisation; a reciprocal condition number below
/// 1e-13 is reported as a rank-deficient design.
pub fn fit_with_diagnostics(
    history: &InflowSeries,
    cfg: &FitConfig,
) -> Result<(AdditiveModel, FitDiagnostics)> {
    cfg.validate()?;
    let n = history.len();
    let p = cfg.parameter_count();
    if n <= 2 * (p - 2) || n < 3 {
        return Err(Error::InsufficientData(format!(
            "{n} samples cannot support {} changepoints and {} harmonic coefficients",
            cfg.changepoints,
            p - 2 - cfg.changepoints
        )));
    }
    let cps = changepoint_grid(n, cfg)?;
    let scale = (n - 1) as f64;
    let y = history.values();

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for (i, yi) in y.iter().enumerate() {
        regressors(i as f64, scale, &cps, &cfg.seasonalities, &mut row);
        for a in 0..p {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            rhs[a] += ra * yi;
            for b in a..p {
                gram[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    // Penalty lambda * |delta|^2 with delta = delta_scaled / scale.
    let ridge = cfg.ridge / (scale * scale);
    for j in 0..cps.len() {
        gram[(2 + j, 2 + j)] += ridge;
    }

    let diag: Vec<f64> = (0..p).map(|a| gram[(a, a)]).collect();
    if let Some(a) = diag.iter().position(|d| !(d / n as f64 > 1e-16)) {
        return Err(Error::Fit(format!(
            "regressor {a} is identically zero; use fewer changepoints or harmonics"
        )));
    }
    let d = DVector::from_iterator(p, diag.iter().map(|v| 1.0 / v.sqrt()));
    let mut eq = gram.clone();
    for a in 0..p {
        for b in 0..p {
            eq[(a, b)] *= d[a] * d[b];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(eq.clone()).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let rcond = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(rcond > 1e-13) {
        return Err(Error::Fit(format!(
            "rank-deficient design (rcond {rcond:.2e}); use fewer changepoints or harmonics"
        )));
    }
    let chol = eq.cholesky().ok_or_else(|| {
        Error::Fit("normal matrix not positive definite; use fewer changepoints or harmonics".into())
    })?;
    let z = chol.solve(&rhs.component_mul(&d));
    let beta = z.component_mul(&d);

    let m0 = beta[0];
    let k0 = beta[1] / scale;
    let delta: Vec<f64> = (0..cps.len()).map(|j| beta[2 + j] / scale).collect();
    let gamma = cps.iter().zip(&delta).map(|(t, d)| -t * d).collect();
    let mut idx = 2 + cps.len();
    let seasonalities: Vec<FourierBlock> = cfg
        .seasonalities
        .iter()
        .map(|(period, order)| {
            let mut a = Vec::with_capacity(*order);
            let mut b = Vec::with_capacity(*order);
            for _ in 0..*order {
                a.push(beta[idx]);
                b.push(beta[idx + 1]);
                idx += 2;
            }
            FourierBlock {
                period: *period,
                order: *order,
                a,
                b,
            }
        })
        .collect();
    let cp_scale = if delta.is_empty() {
        0.0
    } else {
        delta.iter().map(|d: &f64| d.abs()).sum::<f64>() / delta.len() as f64
    };

    let mut model = AdditiveModel {
        epoch: history.start(),
        train_len: n,
        k0,
        m0,
        changepoints: cps,
        delta,
        gamma,
        sigma_obs: 0.0,
        cp_scale,
        seasonalities,
    };

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut trend_sq = 0.0;
    let mut season_sq = vec![0.0; model.seasonalities.len()];
    for (i, yi) in y.iter().enumerate() {
        let t = i as f64;
        let trend = model.evaluate_trend(t);
        let mut fitted = trend;
        for (acc, block) in season_sq.iter_mut().zip(&model.seasonalities) {
            let v = block.value(t);
            *acc += v * v;
            fitted += v;
        }
        let r = yi - fitted;
        sum += r;
        sum_sq += r * r;
        trend_sq += trend * trend;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let residual_std = (sum_sq / nf - mean * mean).max(0.0).sqrt();
    model.sigma_obs = residual_std;
    model.validate().map_err(|e| Error::Fit(e.to_string()))?;

    let diagnostics = FitDiagnostics {
        samples: n,
        parameters: p,
        residual_std,
        residual_rms: (sum_sq / nf).sqrt(),
        trend_rms: (trend_sq / nf).sqrt(),
        seasonality_rms: season_sq.iter().map(|s| (s / nf).sqrt()).collect(),
        rcond,
    };
    Ok((model, diagnostics))
}
