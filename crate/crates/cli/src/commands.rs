use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, Duration, Utc};
use log::info;

use reservoir_smpc::controller::{
    required_scenarios, Policy, RecedingConfig, ScenarioBound, Simulation,
};
use reservoir_smpc::eval::{
    evaluate_trajectory, monte_carlo_compare, synth_dataset, LabelledPolicy, MonteCarloConfig,
    SynthSpec, DEFAULT_DRY_WEIGHT,
};
use reservoir_smpc::hydrology::{load_inflow_csv, write_inflow_csv, DemandProfile, InflowSeries, ReservoirConfig};
use reservoir_smpc::kv::KeyValues;
use reservoir_smpc::scenario::{
    fit_with_diagnostics, nominal_forecast, sample_scenarios_with, AdditiveModel, FitConfig,
    SamplingOptions,
};

use crate::args::{
    ExperimentArgs, FitArgs, ForecastArgs, MonteCarloArgs, ReplayArgs, RunArgs, ScenarioArgs,
    SynthArgs, TrainingArgs,
};
use crate::manifest::{Experiment, Inputs, Manifest};
use crate::usage;

const DEFAULT_EPSILON: f64 = 0.2;
const DEFAULT_BETA: f64 = 1e-6;

const CONTROLLER_KEYS: [&str; 9] = [
    "horizon",
    "scenarios",
    "epsilon",
    "beta",
    "refit_period",
    "scaling",
    "solver_tol",
    "solver_max_iters",
    "seed",
];

fn create_out(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn absolute(path: &Path) -> anyhow::Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn fit_config(t: &TrainingArgs) -> anyhow::Result<FitConfig> {
    let mut cfg = match &t.fit_config {
        Some(path) => FitConfig::load(path)?,
        None => FitConfig::default(),
    };
    if let Some(m) = t.changepoints {
        cfg.changepoints = m;
    }
    if let Some(ridge) = t.ridge {
        cfg.ridge = ridge;
    }
    Ok(cfg)
}

/// K from an explicit count, else from the scenario bound.
fn scenario_count(
    explicit: Option<usize>,
    epsilon: f64,
    beta: f64,
    horizon: usize,
) -> anyhow::Result<(usize, Option<f64>, Option<f64>)> {
    match explicit {
        Some(k) => Ok((k, None, None)),
        None => {
            let k = required_scenarios(&ScenarioBound::new(epsilon, beta, horizon)?)?;
            Ok((k, Some(epsilon), Some(beta)))
        }
    }
}

// ------------------------------------------------------------------- synth

pub fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let mut spec = SynthSpec {
        start: a.start,
        years: a.years as usize,
        ..SynthSpec::default()
    };
    if let Some(sd) = a.noise_sd {
        spec.noise_sd = sd;
    }
    if let Some(f) = a.dry_winter_factor {
        spec.dry_winter_factor = f;
    }
    let data = synth_dataset(&spec, a.seed)?;
    let mut cfg = ReservoirConfig::prismatic(a.area, -0.2, 1.2, 600.0, DemandProfile::constant(a.demand)?);
    cfg.h_init = -0.1;
    cfg.validate()?;

    create_out(&a.out)?;
    write_inflow_csv(a.out.join("inflow.csv"), &data)?;
    cfg.demand.write_csv(a.out.join("demand.csv"))?;
    cfg.write(a.out.join("reservoir.cfg"), "demand.csv")?;
    write_text(&a.out.join("fit.cfg"), &FitConfig::default().to_kv_string())?;
    write_json(&a.out.join("synth.json"), &spec)?;
    println!(
        "wrote {} hours from {} to {}",
        data.len(),
        data.start().format("%Y-%m-%d"),
        a.out.display()
    );
    Ok(())
}

// --------------------------------------------------------------------- fit

struct Training {
    record: InflowSeries,
    history: InflowSeries,
    fit: FitConfig,
}

fn load_training(t: &TrainingArgs, default_end: Option<DateTime<Utc>>) -> anyhow::Result<Training> {
    let record = load_inflow_csv(&t.inflow)?;
    let start = t.train_start.unwrap_or(record.start());
    let end = t.train_end.or(default_end).unwrap_or(record.end());
    let history = record.window(start, end)?;
    Ok(Training {
        record,
        history,
        fit: fit_config(t)?,
    })
}

pub fn fit(a: &FitArgs) -> anyhow::Result<()> {
    let t = load_training(&a.training, None)?;
    let (model, diagnostics) = fit_with_diagnostics(&t.history, &t.fit)?;
    create_out(&a.out)?;
    model.save(a.out.join("model.toml"))?;
    write_json(&a.out.join("diagnostics.json"), &diagnostics)?;
    println!(
        "fitted {} parameters on {} hours: residual std {:.4} m3/s, trend rms {:.4}, rcond {:.3e}",
        diagnostics.parameters,
        diagnostics.samples,
        diagnostics.residual_std,
        diagnostics.trend_rms,
        diagnostics.rcond
    );
    Ok(())
}

// ---------------------------------------------------------------- forecast

fn forecast_count(c: &ScenarioArgs, horizon: usize) -> anyhow::Result<usize> {
    let epsilon = c.epsilon.unwrap_or(DEFAULT_EPSILON);
    let beta = c.beta.unwrap_or(DEFAULT_BETA);
    Ok(scenario_count(c.scenarios.map(|k| k as usize), epsilon, beta, horizon)?.0)
}

pub fn forecast(a: &ForecastArgs) -> anyhow::Result<()> {
    let model = AdditiveModel::load(&a.model)?;
    let origin = a.origin.unwrap_or(model.train_end());
    let horizon = a.horizon as usize;
    let count = forecast_count(&a.count, horizon)?;
    let options = if a.no_noise {
        SamplingOptions::NOMINAL
    } else {
        SamplingOptions::default()
    };
    let scenarios = sample_scenarios_with(&model, origin, horizon, count, a.seed, options)?;
    let nominal = nominal_forecast(&model, origin, horizon)?;

    create_out(&a.out)?;
    scenarios.write_csv(a.out.join("scenarios.csv"))?;
    let mut text = String::from("step,timestamp,nominal\n");
    for (i, v) in nominal.iter().enumerate() {
        let ts = origin + Duration::hours(i as i64);
        writeln!(text, "{i},{},{v}", ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))?;
    }
    write_text(&a.out.join("nominal.csv"), &text)?;
    println!("wrote {horizon}x{count} scenarios from {origin} to {}", a.out.display());
    Ok(())
}

// --------------------------------------------------------------------- run

/// Controller settings with flag > controller file > default precedence.
struct Resolved {
    receding: RecedingConfig,
    epsilon: Option<f64>,
    beta: Option<f64>,
}

fn resolve_receding(e: &ExperimentArgs, fit: FitConfig) -> anyhow::Result<Resolved> {
    let file = match &e.controller {
        Some(path) => {
            let kv = KeyValues::read(path)?;
            kv.deny_unknown(&CONTROLLER_KEYS)?;
            Some(kv)
        }
        None => None,
    };
    let from_file = |key: &str| -> anyhow::Result<Option<f64>> {
        Ok(match &file {
            Some(kv) => kv.get_f64(key)?,
            None => None,
        })
    };
    let count = |key: &str| -> anyhow::Result<Option<u64>> {
        match from_file(key)? {
            Some(v) if v >= 0.0 && v.fract() == 0.0 => Ok(Some(v as u64)),
            Some(v) => usage!("controller setting `{key}` must be a non-negative integer, got {v}"),
            None => Ok(None),
        }
    };
    let defaults = RecedingConfig::default();
    let horizon = e.horizon.or(count("horizon")?).map_or(defaults.horizon, |h| h as usize);
    let epsilon = e.count.epsilon.or(from_file("epsilon")?).unwrap_or(DEFAULT_EPSILON);
    let beta = e.count.beta.or(from_file("beta")?).unwrap_or(DEFAULT_BETA);
    let explicit = e.count.scenarios.or(count("scenarios")?).map(|k| k as usize);
    let (scenarios, epsilon, beta) = scenario_count(explicit, epsilon, beta, horizon)?;
    let receding = RecedingConfig {
        horizon,
        scenarios,
        refit_period: e.refit_period.or(count("refit_period")?).map_or(defaults.refit_period, |p| p as usize),
        fit,
        scaling: from_file("scaling")?.unwrap_or(defaults.scaling),
        solver_tol: from_file("solver_tol")?.unwrap_or(defaults.solver_tol),
        solver_max_iters: count("solver_max_iters")?.map_or(defaults.solver_max_iters, |n| n as usize),
        seed: e.seed.or(count("seed")?).unwrap_or(defaults.seed),
        ..defaults
    };
    receding.validate()?;
    Ok(Resolved {
        receding,
        epsilon,
        beta,
    })
}

fn experiment_inputs(e: &ExperimentArgs, history: &InflowSeries) -> anyhow::Result<Inputs> {
    Ok(Inputs {
        config: absolute(&e.config)?,
        inflow: absolute(&e.training.inflow)?,
        train_start: history.start(),
        train_end: history.end(),
    })
}

pub fn run(a: &RunArgs) -> anyhow::Result<()> {
    let e = &a.experiment;
    let sim_start = match (a.sim_start, e.training.train_end) {
        (Some(s), Some(t)) if s != t => {
            usage!("--train-end ({t}) must equal --sim-start ({s}): the controller trains on everything before the simulation")
        }
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => usage!("one of --sim-start or --train-end is required"),
    };
    let t = load_training(&e.training, Some(sim_start))?;
    let r = resolve_receding(e, t.fit)?;
    let inputs = experiment_inputs(e, &t.history)?;
    execute_run(&inputs, Some(t.record), r.receding, a.policy, a.steps as usize, r.epsilon, r.beta, &e.out)
}

#[allow(clippy::too_many_arguments)]
fn execute_run(
    inputs: &Inputs,
    record: Option<InflowSeries>,
    receding: RecedingConfig,
    policy: Policy,
    steps: usize,
    epsilon: Option<f64>,
    beta: Option<f64>,
    out: &Path,
) -> anyhow::Result<()> {
    let cfg = ReservoirConfig::load(&inputs.config)?;
    let record = match record {
        Some(r) => r,
        None => load_inflow_csv(&inputs.inflow)?,
    };
    let history = record.window(inputs.train_start, inputs.train_end)?;
    let truth = record.window(inputs.train_end, record.end())?;
    info!("running {policy} for {steps} steps from {}", inputs.train_end);
    let sim = Simulation::new(&history, &truth, &cfg, &receding, steps, &[policy])?;
    let traj = sim.run(policy)?;
    let eval = evaluate_trajectory(&traj, &cfg, DEFAULT_DRY_WEIGHT);

    create_out(out)?;
    traj.write_csv(out.join("trajectory.csv"))?;
    let mut manifest = Manifest::new(
        inputs.clone(),
        epsilon,
        beta,
        receding,
        Experiment::Run {
            policy,
            steps,
            stats: traj.stats.clone(),
        },
    );
    manifest.outputs = vec!["trajectory.csv".into()];
    manifest.write(&out.join("manifest.json"))?;
    println!(
        "{policy}: {steps} steps, K = {}, cost {:.6}, dry hours {}, deficit hours {}, solves {} ({} unconverged)",
        manifest.receding.scenarios,
        eval.total(),
        eval.dry_hours,
        eval.deficit_hours,
        traj.stats.solves,
        traj.stats.unconverged
    );
    Ok(())
}

// -------------------------------------------------------------- montecarlo

pub fn montecarlo(a: &MonteCarloArgs) -> anyhow::Result<()> {
    let e = &a.experiment;
    let t = load_training(&e.training, None)?;
    let r = resolve_receding(e, t.fit)?;
    let inputs = experiment_inputs(e, &t.history)?;
    let policies = if a.policies.is_empty() {
        LabelledPolicy::standard()
    } else {
        a.policies.clone()
    };
    let mc = MonteCarloConfig {
        replicates: a.replicates as usize,
        steps: a.steps as usize,
        policies,
        seed: r.receding.seed,
        receding: r.receding,
        dry_weight: a.dry_weight,
    };
    execute_montecarlo(&inputs, Some(t.history), mc, a.curves, r.epsilon, r.beta, &e.out)
}

fn execute_montecarlo(
    inputs: &Inputs,
    history: Option<InflowSeries>,
    mc: MonteCarloConfig,
    curves: bool,
    epsilon: Option<f64>,
    beta: Option<f64>,
    out: &Path,
) -> anyhow::Result<()> {
    let cfg = ReservoirConfig::load(&inputs.config)?;
    let history = match history {
        Some(h) => h,
        None => load_inflow_csv(&inputs.inflow)?.window(inputs.train_start, inputs.train_end)?,
    };
    mc.validate()?;
    let generator = reservoir_smpc::scenario::fit(&history, &mc.receding.fit)?;
    info!(
        "{} replicates x {} policies, {} steps each",
        mc.replicates,
        mc.policies.len(),
        mc.steps
    );
    let report = monte_carlo_compare(&history, &generator, &cfg, &mc)?;

    create_out(out)?;
    report.write_json(out.join("report.json"))?;
    report.write_csv(out.join("report.csv"))?;
    let mut outputs = vec!["report.json".to_string(), "report.csv".to_string()];
    if curves {
        let dir = out.join("curves");
        create_out(&dir)?;
        for path in report.write_curves(&dir)? {
            if let Some(name) = path.file_name() {
                outputs.push(format!("curves/{}", name.to_string_lossy()));
            }
        }
    }
    let mut manifest = Manifest::new(
        inputs.clone(),
        epsilon,
        beta,
        mc.receding.clone(),
        Experiment::Montecarlo {
            policies: mc.policies.clone(),
            replicates: mc.replicates,
            steps: mc.steps,
            dry_weight: mc.dry_weight,
            seed: mc.seed,
            curves,
            failures: report.failures.len(),
        },
    );
    manifest.outputs = outputs;
    manifest.write(&out.join("manifest.json"))?;

    println!("{:<14} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9}", "policy", "mean", "median", "q1", "q3", "dry_h", "deficit_h");
    for s in &report.summary {
        println!(
            "{:<14} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>9} {:>9}",
            s.label, s.mean, s.median, s.q1, s.q3, s.median_dry_hours, s.median_deficit_hours
        );
    }
    for f in &report.failures {
        eprintln!(
            "replicate {} ({}): {}",
            f.replicate,
            f.label.as_deref().unwrap_or("all policies"),
            f.message
        );
    }
    Ok(())
}

// ------------------------------------------------------------------ replay

pub fn replay(a: &ReplayArgs) -> anyhow::Result<()> {
    let m = Manifest::read(&a.manifest)?;
    match m.experiment {
        Experiment::Run { policy, steps, .. } => {
            execute_run(&m.inputs, None, m.receding, policy, steps, m.epsilon, m.beta, &a.out)
        }
        Experiment::Montecarlo {
            policies,
            replicates,
            steps,
            dry_weight,
            seed,
            curves,
            ..
        } => {
            let mc = MonteCarloConfig {
                replicates,
                steps,
                policies,
                receding: m.receding,
                dry_weight,
                seed,
            };
            execute_montecarlo(&m.inputs, None, mc, curves, m.epsilon, m.beta, &a.out)
        }
    }
}
