use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{MpcProblem, ObjectiveKind, DEFAULT_SCALING};
use super::solver::{solve, SolverOptions};
use crate::error::{Error, Result};
use crate::hydrology::{climatology, DailyProfile, InflowSeries, ReservoirConfig};
use crate::rng::{derive_seed, TAG_RECEDING_STEP};
use crate::scenario::{
    fit, nominal_forecast, sample_scenarios_with, AdditiveModel, FitConfig, SamplingOptions,
    ScenarioMatrix,
};
use crate::SECONDS_PER_STEP;

/// Where the controller's inflow forecast comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Policy {
    /// K sampled scenarios from the additive model.
    #[serde(rename = "smpc")]
    Scenario,
    /// One forecast: the daily climatology of the initial history.
    #[serde(rename = "dmpc-clim")]
    Climatology,
    /// One forecast: the additive model's nominal prediction.
    #[serde(rename = "dmpc-prophet")]
    Prophet,
    /// One forecast: the true future inflow.
    #[serde(rename = "oracle")]
    Oracle,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Scenario,
        Policy::Climatology,
        Policy::Prophet,
        Policy::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Scenario => "smpc",
            Policy::Climatology => "dmpc-clim",
            Policy::Prophet => "dmpc-prophet",
            Policy::Oracle => "oracle",
        }
    }

    /// True if the policy forecasts with the fitted additive model.
    pub fn needs_model(self) -> bool {
        matches!(self, Policy::Scenario | Policy::Prophet)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown policy `{s}`; expected smpc, dmpc-clim, dmpc-prophet or oracle"
                ))
            })
    }
}

/// Receding-horizon settings shared by all policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecedingConfig {
    /// Prediction horizon H [steps].
    pub horizon: usize,
    /// Scenario count K for the scenario policy.
    pub scenarios: usize,
    /// Hours between refits of the additive model on the expanding window.
    pub refit_period: usize,
    pub fit: FitConfig,
    pub sampling: SamplingOptions,
    /// Weight `c` of the volume terms.
    pub scaling: f64,
    pub objective: ObjectiveKind,
    pub solver_tol: f64,
    pub solver_max_iters: usize,
    pub seed: u64,
}

impl Default for RecedingConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        Self {
            horizon: 24,
            scenarios: 379,
            refit_period: 24,
            fit: FitConfig::default(),
            sampling: SamplingOptions::default(),
            scaling: DEFAULT_SCALING,
            objective: ObjectiveKind::SumOfNorms,
            solver_tol: solver.tol,
            solver_max_iters: solver.max_iters,
            seed: 0,
        }
    }
}

impl RecedingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.scenarios == 0 || self.refit_period == 0 {
            return Err(Error::InvalidInput(format!(
                "horizon ({}), scenarios ({}) and refit period ({}) must be at least 1",
                self.horizon, self.scenarios, self.refit_period
            )));
        }
        if !(self.solver_tol > 0.0) || self.solver_max_iters == 0 {
            return Err(Error::InvalidInput(
                "solver tolerance must be positive and max_iters at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A refit that failed and was replaced by the previous model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitFailure {
    pub step: usize,
    pub message: String,
}

/// Additive models refitted every `refit_period` steps on the expanding
/// window `history ⊕ truth[..step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSchedule {
    refit_period: usize,
    models: Vec<AdditiveModel>,
    failures: Vec<RefitFailure>,
}

impl ModelSchedule {
    pub fn build(
        history: &InflowSeries,
        truth: &InflowSeries,
        fit_cfg: &FitConfig,
        refit_period: usize,
        steps: usize,
    ) -> Result<Self> {
        if refit_period == 0 {
            return Err(Error::InvalidInput("refit period must be at least 1".into()));
        }
        let blocks = steps.div_ceil(refit_period).max(1);
        let fits: Vec<Result<AdditiveModel>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let observed = (b * refit_period).min(truth.len());
                let window = history.extended(&truth.values()[..observed])?;
                fit(&window, fit_cfg)
            })
            .collect();
        let mut models: Vec<AdditiveModel> = Vec::with_capacity(blocks);
        let mut failures = Vec::new();
        for (b, result) in fits.into_iter().enumerate() {
            match (result, models.last()) {
                (Ok(m), _) => models.push(m),
                (Err(e), None) => return Err(e),
                (Err(e), Some(prev)) => {
                    let step = b * refit_period;
                    log::warn!("refit at step {step} failed, keeping previous model: {e}");
                    failures.push(RefitFailure {
                        step,
                        message: e.to_string(),
                    });
                    models.push(prev.clone());
                }
            }
        }
        Ok(Self {
            refit_period,
            models,
            failures,
        })
    }

    pub fn model_at(&self, step: usize) -> &AdditiveModel {
        let b = (step / self.refit_period).min(self.models.len() - 1);
        &self.models[b]
    }

    pub fn models(&self) -> &[AdditiveModel] {
        &self.models
    }

    pub fn failures(&self) -> &[RefitFailure] {
        &self.failures
    }
}

/// Solver statistics over one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub solves: usize,
    pub total_iters: usize,
    pub max_iters: usize,
    /// Solves that hit the iteration cap before certifying `tol`.
    pub unconverged: usize,
    /// Largest certified relative gap over all solves.
    pub max_relative_gap: f64,
    pub refit_failures: Vec<RefitFailure>,
}

/// Closed-loop simulation output. Entry `i` describes hour `i`: inflow,
/// release and demand during the hour, volume and level at its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub policy: Policy,
    pub start: DateTime<Utc>,
    /// Volume before the first step [m³].
    pub s0: f64,
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub s: Vec<f64>,
    pub h: Vec<f64>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::hours(i as i64)
    }

    /// `s(T) − s(0) − 3600 Σ (q − u)` and the allowed bound
    /// `1e-6 · max |s|`.
    pub fn mass_balance(&self) -> (f64, f64) {
        let net: f64 = self.q.iter().zip(&self.u).map(|(q, u)| q - u).sum();
        let last = self.s.last().copied().unwrap_or(self.s0);
        let residual = last - self.s0 - SECONDS_PER_STEP * net;
        let scale = self.s.iter().fold(self.s0.abs(), |m, s| m.max(s.abs()));
        (residual, 1e-6 * scale)
    }

    pub fn check_mass_balance(&self) -> Result<()> {
        let (residual, limit) = self.mass_balance();
        if residual.abs() <= limit {
            Ok(())
        } else {
            Err(Error::MassBalance { residual, limit })
        }
    }

    /// CSV with header `t,timestamp,q,u,s,h,w`; `t` counts steps from 1.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "t,timestamp,q,u,s,h,w").map_err(io)?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                i + 1,
                crate::hydrology::format_timestamp(self.timestamp(i)),
                self.q[i],
                self.u[i],
                self.s[i],
                self.h[i],
                self.w[i]
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Inputs shared by every policy of one closed-loop experiment: the initial
/// history, the true inflow, and the model schedule and climatology derived
/// from them.
pub struct Simulation<'a> {
    history: &'a InflowSeries,
    truth: &'a InflowSeries,
    cfg: &'a ReservoirConfig,
    rc: &'a RecedingConfig,
    steps: usize,
    schedule: Option<ModelSchedule>,
    climatology: Option<DailyProfile>,
}

impl<'a> Simulation<'a> {
    /// Validate inputs and precompute what `policies` need.
    pub fn new(
        history: &'a InflowSeries,
        truth: &'a InflowSeries,
        cfg: &'a ReservoirConfig,
        rc: &'a RecedingConfig,
        steps: usize,
        policies: &[Policy],
    ) -> Result<Self> {
        cfg.validate()?;
        rc.validate()?;
        if steps == 0 {
            return Err(Error::InvalidInput("simulation needs at least 1 step".into()));
        }
        if history.end() != truth.start() {
            return Err(Error::InvalidInput(format!(
                "history ends at {} but the simulation starts at {}",
                history.end(),
                truth.start()
            )));
        }
        let needed = if policies.contains(&Policy::Oracle) {
            steps + rc.horizon - 1
        } else {
            steps
        };
        if truth.len() < needed {
            return Err(Error::InsufficientData(format!(
                "simulation of {steps} steps needs {needed} hours of inflow, got {}",
                truth.len()
            )));
        }
        let schedule = if policies.iter().any(|p| p.needs_model()) {
            Some(ModelSchedule::build(history, truth, &rc.fit, rc.refit_period, steps)?)
        } else {
            None
        };
        let climatology = if policies.contains(&Policy::Climatology) {
            Some(climatology(history)?)
        } else {
            None
        };
        Ok(Self {
            history,
            truth,
            cfg,
            rc,
            steps,
            schedule,
            climatology,
        })
    }

    pub fn schedule(&self) -> Option<&ModelSchedule> {
        self.schedule.as_ref()
    }

    pub fn history(&self) -> &InflowSeries {
        self.history
    }

    fn forecast(&self, policy: Policy, step: usize, origin: DateTime<Utc>) -> Result<ScenarioMatrix> {
        let h = self.rc.horizon;
        let missing = |what: &str| Error::InvalidInput(format!("simulation was not prepared for {what}"));
        match policy {
            Policy::Scenario => {
                let model = self.schedule.as_ref().ok_or_else(|| missing("smpc"))?.model_at(step);
                let seed = derive_seed(self.rc.seed, TAG_RECEDING_STEP, step as u64);
                sample_scenarios_with(model, origin, h, self.rc.scenarios, seed, self.rc.sampling)
            }
            Policy::Prophet => {
                let model = self
                    .schedule
                    .as_ref()
                    .ok_or_else(|| missing("dmpc-prophet"))?
                    .model_at(step);
                ScenarioMatrix::single(origin, nominal_forecast(model, origin, h)?)
            }
            Policy::Climatology => {
                let clim = self.climatology.as_ref().ok_or_else(|| missing("dmpc-clim"))?;
                ScenarioMatrix::single(origin, clim.horizon(origin, h))
            }
            Policy::Oracle => {
                let slice = self.truth.values().get(step..step + h).ok_or_else(|| missing("oracle"))?;
                ScenarioMatrix::single(origin, slice.to_vec())
            }
        }
    }

    /// Closed loop: forecast, solve, apply the first release, advance the
    /// true dynamics. The mass balance is checked at the end.
    pub fn run(&self, policy: Policy) -> Result<Trajectory> {
        let cfg = self.cfg;
        let rc = self.rc;
        let t = self.steps;
        let start = self.truth.start();
        let mut state = cfg.initial_state(start)?;
        let s0 = state.volume;
        let mut traj = Trajectory {
            policy,
            start,
            s0,
            q: Vec::with_capacity(t),
            u: Vec::with_capacity(t),
            w: Vec::with_capacity(t),
            s: Vec::with_capacity(t),
            h: Vec::with_capacity(t),
            stats: RunStats {
                refit_failures: if policy.needs_model() {
                    self.schedule.as_ref().map(|s| s.failures.clone()).unwrap_or_default()
                } else {
                    Vec::new()
                },
                ..RunStats::default()
            },
        };
        let mut warm: Option<Vec<f64>> = None;
        for i in 0..t {
            let origin = state.time;
            let at = |e: Error| e.at_step(i);
            let scenarios = self.forecast(policy, i, origin).map_err(at)?;
            let demand = cfg.demand.horizon(origin, rc.horizon);
            let mut problem = MpcProblem::from_config(cfg, state.volume, scenarios, demand);
            problem.scaling = rc.scaling;
            problem.objective = rc.objective;
            let opts = SolverOptions {
                tol: rc.solver_tol,
                max_iters: rc.solver_max_iters,
                warm_start: warm.take(),
            };
            let plan = solve(&problem, &opts).map_err(at)?;
            let stats = &mut traj.stats;
            stats.solves += 1;
            stats.total_iters += plan.solver_iters;
            stats.max_iters = stats.max_iters.max(plan.solver_iters);
            if !plan.converged {
                stats.unconverged += 1;
                log::debug!("step {i}: solver stopped at gap {:.3e}", plan.gap);
            }
            stats.max_relative_gap = stats
                .max_relative_gap
                .max(plan.gap / plan.objective_value.abs().max(f64::MIN_POSITIVE));

            let u = plan.u[0];
            let q = self.truth.values()[i];
            let w = cfg.demand.at(origin);
            state = cfg.step(&state, q, u).map_err(at)?;
            traj.q.push(q);
            traj.u.push(u);
            traj.w.push(w);
            traj.s.push(state.volume);
            traj.h.push(cfg.level(state.volume));

            let mut shifted = plan.u;
            shifted.rotate_left(1);
            if let (Some(last), Some(prev)) = (shifted.len().checked_sub(1), shifted.len().checked_sub(2)) {
                shifted[last] = shifted[prev];
            }
            warm = Some(shifted);
        }
        traj.check_mass_balance()?;
        Ok(traj)
    }
}

/// Run one policy in closed loop over `steps` hours of `truth`, starting
/// right after `history`.
pub fn run_receding_horizon(
    policy: Policy,
    history: &InflowSeries,
    truth: &InflowSeries,
    cfg: &ReservoirConfig,
    rc: &RecedingConfig,
    steps: usize,
) -> Result<Trajectory> {
    Simulation::new(history, truth, cfg, rc, steps, &[policy])?.run(policy)
}
