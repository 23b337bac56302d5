use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::{evaluate_trajectory, EvaluationRecord, DEFAULT_DRY_WEIGHT};
use crate::controller::{Policy, RecedingConfig, Simulation, Trajectory};
use crate::error::{Error, Result};
use crate::hydrology::{InflowSeries, ReservoirConfig};
use crate::rng::{derive_seed, TAG_REPLICATE_POLICY, TAG_REPLICATE_TRUTH};
use crate::scenario::{sample_scenarios_with, AdditiveModel, SamplingOptions};

/// A policy under a report label, so the same policy can appear twice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelledPolicy {
    pub label: String,
    pub policy: Policy,
}

impl LabelledPolicy {
    pub fn new(policy: Policy) -> Self {
        Self {
            label: policy.name().to_string(),
            policy,
        }
    }

    /// The four standard policies under their own names.
    pub fn standard() -> Vec<LabelledPolicy> {
        Policy::ALL.into_iter().map(Self::new).collect()
    }
}

impl FromStr for LabelledPolicy {
    type Err = Error;

    /// `policy` or `label=policy`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('=') {
            Some((label, policy)) if !label.trim().is_empty() => Ok(Self {
                label: label.trim().to_string(),
                policy: policy.trim().parse()?,
            }),
            Some(_) => Err(Error::InvalidInput(format!("empty label in `{s}`"))),
            None => Ok(Self::new(s.trim().parse()?)),
        }
    }
}

/// Monte Carlo comparison settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub replicates: usize,
    /// Closed-loop steps per replicate.
    pub steps: usize,
    /// Must contain at least one oracle entry; the first one normalises.
    pub policies: Vec<LabelledPolicy>,
    /// Controller settings; its seed is replaced by a per-replicate seed.
    pub receding: RecedingConfig,
    /// `c_d` of the nonlinear cost.
    pub dry_weight: f64,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            replicates: 50,
            steps: 720,
            policies: LabelledPolicy::standard(),
            receding: RecedingConfig::default(),
            dry_weight: DEFAULT_DRY_WEIGHT,
            seed: 0,
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidInput(format!(
                "Monte Carlo needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("Monte Carlo needs at least 1 step".into()));
        }
        if !self.policies.iter().any(|p| p.policy == Policy::Oracle) {
            return Err(Error::InvalidInput(
                "policy list needs an oracle entry to normalise costs".into(),
            ));
        }
        let mut labels: Vec<&str> = self.policies.iter().map(|p| p.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("duplicate policy label `{}`", w[0])));
        }
        if !(self.dry_weight > 0.0 && self.dry_weight.is_finite()) {
            return Err(Error::InvalidInput("dry weight must be positive".into()));
        }
        self.receding.validate()
    }

    fn oracle_label(&self) -> &str {
        &self
            .policies
            .iter()
            .find(|p| p.policy == Policy::Oracle)
            .expect("validated")
            .label
    }

    /// Smallest normalisation denominator, `1e-9 · T`.
    pub fn cost_floor(&self) -> f64 {
        1e-9 * self.steps as f64
    }
}

/// One policy on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub label: String,
    pub policy: Policy,
    pub cum_j: f64,
    pub norm_j: f64,
    pub dry_hours: usize,
    pub deficit_hours: usize,
    pub deficit_peak: f64,
    pub min_level: f64,
    pub flood_hours: usize,
    pub unconverged_solves: usize,
    /// Cumulative cost after each hour.
    #[serde(default, skip_serializing)]
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub truth_seed: u64,
    pub policy_seed: u64,
    pub oracle_cost: f64,
    /// True if the oracle cost fell below the floor and the floor was used.
    pub floored: bool,
    pub results: Vec<PolicyResult>,
}

/// A replicate (`label == None`) or a single policy run that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub label: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub replicate: usize,
    pub norm_j: f64,
}

/// Distribution of one policy's normalised cost over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub label: String,
    pub policy: Policy,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    /// Replicates beyond 1.5 IQR from the quartiles.
    pub outliers: Vec<Outlier>,
    pub median_dry_hours: f64,
    pub median_deficit_hours: f64,
    pub mean_cum_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub config: MonteCarloConfig,
    pub replicates: Vec<ReplicateOutcome>,
    pub failures: Vec<ReplicateFailure>,
    pub summary: Vec<PolicySummary>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

fn summarise(label: &LabelledPolicy, outcomes: &[ReplicateOutcome]) -> PolicySummary {
    let rows: Vec<(usize, &PolicyResult)> = outcomes
        .iter()
        .filter_map(|o| {
            o.results
                .iter()
                .find(|r| r.label == label.label)
                .map(|r| (o.replicate, r))
        })
        .collect();
    let mut sorted: Vec<f64> = rows.iter().map(|(_, r)| r.norm_j).collect();
    sorted.sort_by(f64::total_cmp);
    let n = rows.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = sorted.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v));
    let lower_whisker = inside.clone().fold(f64::NAN, f64::min);
    let upper_whisker = inside.fold(f64::NAN, f64::max);
    PolicySummary {
        label: label.label.clone(),
        policy: label.policy,
        count: n,
        mean,
        median: quantile(&sorted, 0.5),
        q1,
        q3,
        lower_whisker,
        upper_whisker,
        outliers: rows
            .iter()
            .filter(|(_, r)| !(lo_fence..=hi_fence).contains(&r.norm_j))
            .map(|(replicate, r)| Outlier {
                replicate: *replicate,
                norm_j: r.norm_j,
            })
            .collect(),
        median_dry_hours: median(rows.iter().map(|(_, r)| r.dry_hours as f64)),
        median_deficit_hours: median(rows.iter().map(|(_, r)| r.deficit_hours as f64)),
        mean_cum_j: rows.iter().map(|(_, r)| r.cum_j).sum::<f64>() / n as f64,
    }
}

fn run_replicate(
    r: usize,
    history: &InflowSeries,
    generator: &AdditiveModel,
    cfg: &ReservoirConfig,
    mc: &MonteCarloConfig,
) -> (Option<ReplicateOutcome>, Vec<ReplicateFailure>) {
    let fail = |label: Option<&str>, e: &Error| ReplicateFailure {
        replicate: r,
        label: label.map(str::to_string),
        message: e.to_string(),
    };
    let truth_seed = derive_seed(mc.seed, TAG_REPLICATE_TRUTH, r as u64);
    let policy_seed = derive_seed(mc.seed, TAG_REPLICATE_POLICY, r as u64);
    let rc = RecedingConfig {
        seed: policy_seed,
        ..mc.receding.clone()
    };
    let len = mc.steps + rc.horizon - 1;
    let truth = sample_scenarios_with(
        generator,
        history.end(),
        len,
        1,
        truth_seed,
        SamplingOptions::default(),
    )
    .and_then(|m| m.to_series());
    let truth = match truth {
        Ok(t) => t,
        Err(e) => return (None, vec![fail(None, &e)]),
    };
    let distinct: Vec<Policy> = {
        let mut p: Vec<Policy> = mc.policies.iter().map(|p| p.policy).collect();
        p.sort_unstable();
        p.dedup();
        p
    };
    let sim = match Simulation::new(history, &truth, cfg, &rc, mc.steps, &distinct) {
        Ok(s) => s,
        Err(e) => return (None, vec![fail(None, &e)]),
    };
    let runs: BTreeMap<Policy, Result<(Trajectory, EvaluationRecord)>> = distinct
        .par_iter()
        .map(|&p| {
            let run = sim
                .run(p)
                .map(|t| {
                    let rec = evaluate_trajectory(&t, cfg, mc.dry_weight);
                    (t, rec)
                });
            (p, run)
        })
        .collect();

    let oracle_cost = match &runs[&Policy::Oracle] {
        Ok((_, rec)) => rec.total(),
        Err(e) => return (None, vec![fail(Some(mc.oracle_label()), e)]),
    };
    let floor = mc.cost_floor();
    let floored = oracle_cost < floor;
    let denom = if floored { floor } else { oracle_cost };
    if floored {
        log::warn!("replicate {r}: oracle cost {oracle_cost:e} below floor, normalising by {floor:e}");
    }
    let mut failures = Vec::new();
    let mut results = Vec::new();
    for lp in &mc.policies {
        match &runs[&lp.policy] {
            Ok((traj, rec)) => results.push(PolicyResult {
                label: lp.label.clone(),
                policy: lp.policy,
                cum_j: rec.total(),
                norm_j: rec.total() / denom,
                dry_hours: rec.dry_hours,
                deficit_hours: rec.deficit_hours,
                deficit_peak: rec.deficit_peak,
                min_level: rec.min_level,
                flood_hours: rec.flood_hours,
                unconverged_solves: traj.stats.unconverged,
                curve: rec.cumulative.clone(),
            }),
            Err(e) => failures.push(fail(Some(&lp.label), e)),
        }
    }
    let outcome = ReplicateOutcome {
        replicate: r,
        truth_seed,
        policy_seed,
        oracle_cost,
        floored,
        results,
    };
    (Some(outcome), failures)
}

/// Oracle-normalised comparison of policies on `mc.replicates` inflow
/// realisations drawn from `generator` right after `history`.
///
/// Every replicate draws its true inflow from its own seed, runs all listed
/// policies against it and divides each cumulative cost by the oracle's.
/// Failed replicates or policy runs are listed in the report; the rest of
/// the experiment continues.
pub fn monte_carlo_compare(
    history: &InflowSeries,
    generator: &AdditiveModel,
    cfg: &ReservoirConfig,
    mc: &MonteCarloConfig,
) -> Result<MonteCarloReport> {
    mc.validate()?;
    cfg.validate()?;
    if history.end() < generator.train_end() {
        return Err(Error::InvalidInput(format!(
            "history ends at {} before the generator's training window ({})",
            history.end(),
            generator.train_end()
        )));
    }
    let per_replicate: Vec<_> = (0..mc.replicates)
        .into_par_iter()
        .map(|r| run_replicate(r, history, generator, cfg, mc))
        .collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (outcome, fails) in per_replicate {
        replicates.extend(outcome);
        failures.extend(fails);
    }
    for f in &failures {
        log::warn!(
            "replicate {} {}: {}",
            f.replicate,
            f.label.as_deref().unwrap_or("(all policies)"),
            f.message
        );
    }
    let summary = mc
        .policies
        .iter()
        .filter(|lp| replicates.iter().any(|o| o.results.iter().any(|r| r.label == lp.label)))
        .map(|lp| summarise(lp, &replicates))
        .collect();
    Ok(MonteCarloReport {
        config: mc.clone(),
        replicates,
        failures,
        summary,
    })
}

fn curve_column(label: &str) -> String {
    format!("J_{}", label.replace('-', "_"))
}

impl MonteCarloReport {
    pub fn summary_for(&self, label: &str) -> Option<&PolicySummary> {
        self.summary.iter().find(|s| s.label == label)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// One row per replicate and policy:
    /// `replicate,policy,cumJ,normJ,dry_hours,deficit_hours,deficit_peak,min_level`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(
            out,
            "replicate,policy,cumJ,normJ,dry_hours,deficit_hours,deficit_peak,min_level"
        )
        .map_err(io)?;
        for o in &self.replicates {
            for r in &o.results {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    o.replicate,
                    r.label,
                    r.cum_j,
                    r.norm_j,
                    r.dry_hours,
                    r.deficit_hours,
                    r.deficit_peak,
                    r.min_level
                )
                .map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }

    /// Cumulative-cost curves, one file `curves_rNNN.csv` per replicate with
    /// header `t,J_<label>...`. Returns the paths written.
    pub fn write_curves(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let mut written = Vec::new();
        for o in &self.replicates {
            let path = dir.join(format!("curves_r{:03}.csv", o.replicate));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut out = std::io::BufWriter::new(file);
            let io = |e| Error::io(&path, e);
            let header: Vec<String> = o.results.iter().map(|r| curve_column(&r.label)).collect();
            writeln!(out, "t,{}", header.join(",")).map_err(io)?;
            let len = o.results.iter().map(|r| r.curve.len()).max().unwrap_or(0);
            for t in 0..len {
                write!(out, "{}", t + 1).map_err(io)?;
                for r in &o.results {
                    match r.curve.get(t) {
                        Some(v) => write!(out, ",{v}").map_err(io)?,
                        None => write!(out, ",").map_err(io)?,
                    }
                }
                writeln!(out).map_err(io)?;
            }
            out.flush().map_err(io)?;
            written.push(path);
        }
        Ok(written)
    }
}
