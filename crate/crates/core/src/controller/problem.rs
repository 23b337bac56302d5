use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::hydrology::ReservoirConfig;
use crate::scenario::ScenarioMatrix;
use crate::SECONDS_PER_STEP;

/// Default weight `c` of the volume terms.
pub const DEFAULT_SCALING: f64 = 1e-4;

/// Stage cost of the MPC problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// `c(‖s_max − sᵏ‖ + ‖sᵏ − s_min‖)` averaged over scenarios, plus `‖u − w‖`.
    SumOfNorms,
    /// `c²(‖s_max − sᵏ‖² + ‖sᵏ − s_min‖²)` averaged over scenarios, plus
    /// `λ‖u − w‖²`. With `c = 1` this is the classical quadratic MPC cost.
    Quadratic { lambda: f64 },
}

/// One finite-horizon scenario MPC instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    /// Volume at the start of the horizon [m³].
    pub s0: f64,
    pub scenarios: ScenarioMatrix,
    /// Demand over the horizon [m³/s].
    pub demand: Vec<f64>,
    pub u_min: f64,
    pub u_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// Weight `c` of the volume terms.
    pub scaling: f64,
    pub objective: ObjectiveKind,
}

impl MpcProblem {
    /// Problem with the bounds of `cfg`, `c = 1e-4` and the sum-of-norms cost.
    pub fn from_config(
        cfg: &ReservoirConfig,
        s0: f64,
        scenarios: ScenarioMatrix,
        demand: Vec<f64>,
    ) -> Self {
        Self {
            s0,
            scenarios,
            demand,
            u_min: cfg.u_min,
            u_max: cfg.u_max,
            s_min: cfg.s_min,
            s_max: cfg.s_max,
            scaling: DEFAULT_SCALING,
            objective: ObjectiveKind::SumOfNorms,
        }
    }

    pub fn horizon(&self) -> usize {
        self.scenarios.horizon()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("s0", self.s0),
            ("u_min", self.u_min),
            ("u_max", self.u_max),
            ("s_min", self.s_min),
            ("s_max", self.s_max),
            ("scaling", self.scaling),
        ] {
            ensure_finite(name, v)?;
        }
        if self.demand.len() != self.horizon() {
            return Err(Error::DimensionMismatch(format!(
                "demand has {} entries for a horizon of {}",
                self.demand.len(),
                self.horizon()
            )));
        }
        if let Some(w) = self.demand.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidInput(format!("demand {w} is not finite")));
        }
        if !(self.u_min < self.u_max) || !(self.s_min < self.s_max) {
            return Err(Error::InvalidInput(
                "bounds must satisfy u_min < u_max and s_min < s_max".into(),
            ));
        }
        if !(self.scaling > 0.0) {
            return Err(Error::InvalidInput("scaling c must be positive".into()));
        }
        if let ObjectiveKind::Quadratic { lambda } = self.objective {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
            }
        }
        Ok(())
    }
}

/// Distinct scenario columns in a canonical order with their multiplicities
/// as weights `n_j / K`.
///
/// Working on this set makes every quantity derived from the scenarios
/// exactly invariant under column permutation and duplication.
pub(crate) struct ScenarioSet {
    pub columns: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ScenarioSet {
    pub fn new(m: &ScenarioMatrix) -> Self {
        let mut cols: Vec<&[f64]> = m.columns().collect();
        cols.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let k = m.count() as f64;
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for c in cols {
            match columns.last() {
                Some(last) if last.as_slice() == c => *counts.last_mut().unwrap() += 1,
                _ => {
                    columns.push(c.to_vec());
                    counts.push(1);
                }
            }
        }
        let weights = counts.iter().map(|n| *n as f64 / k).collect();
        Self { columns, weights }
    }
}

/// Scenario volumes `sᵏ(1..=H)` for release plan `u`.
pub fn propagate(s0: f64, inflow: &[f64], u: &[f64]) -> Vec<f64> {
    let mut s = s0;
    inflow
        .iter()
        .zip(u)
        .map(|(q, u)| {
            s += SECONDS_PER_STEP * (q - u);
            s
        })
        .collect()
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Objective value of release plan `u` in physical units.
///
/// Scenario volumes follow the hourly mass balance; the volume terms are
/// averaged over scenarios and the demand term is added once.
pub fn scenario_objective(p: &MpcProblem, u: &[f64]) -> Result<f64> {
    p.validate()?;
    if u.len() != p.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "plan has {} entries for a horizon of {}",
            u.len(),
            p.horizon()
        )));
    }
    let set = ScenarioSet::new(&p.scenarios);
    let c = p.scaling;
    let mut volume_term = 0.0;
    for (q, weight) in set.columns.iter().zip(&set.weights) {
        let s = propagate(p.s0, q, u);
        let upper = norm(s.iter().map(|s| p.s_max - s));
        let lower = norm(s.iter().map(|s| s - p.s_min));
        volume_term += weight
            * match p.objective {
                ObjectiveKind::SumOfNorms => c * (upper + lower),
                ObjectiveKind::Quadratic { .. } => c * c * (upper * upper + lower * lower),
            };
    }
    let deficit = norm(u.iter().zip(&p.demand).map(|(u, w)| u - w));
    let demand_term = match p.objective {
        ObjectiveKind::SumOfNorms => deficit,
        ObjectiveKind::Quadratic { lambda } => lambda * deficit * deficit,
    };
    Ok(volume_term + demand_term)
}
