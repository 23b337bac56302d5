use chrono::{TimeZone, Utc};

use reservoir_smpc::controller::{
    run_receding_horizon, solve, MpcProblem, Policy, RecedingConfig, SolverOptions,
};
use reservoir_smpc::eval::{evaluate_trajectory, synth_dataset, SynthSpec, DEFAULT_DRY_WEIGHT};
use reservoir_smpc::hydrology::{
    load_inflow_csv, write_inflow_csv, DemandProfile, InflowSeries, ReservoirConfig,
};
use reservoir_smpc::scenario::{fit, sample_scenarios, AdditiveModel, FitConfig};
use reservoir_smpc::Error;

fn record() -> InflowSeries {
    let spec = SynthSpec {
        years: 2,
        ..SynthSpec::default()
    };
    synth_dataset(&spec, 5).unwrap()
}

fn small_lake() -> ReservoirConfig {
    let mut cfg = ReservoirConfig::prismatic(2e7, -0.2, 1.2, 600.0, DemandProfile::constant(45.0).unwrap());
    cfg.h_init = 0.1;
    cfg
}

#[test]
fn synth_fit_sample_solve_run_evaluate() {
    let data = record();
    let sim_start = Utc.with_ymd_and_hms(1998, 6, 1, 0, 0, 0).unwrap();
    let history = data.window(data.start(), sim_start).unwrap();
    let truth = data.window(sim_start, data.end()).unwrap();
    let cfg = small_lake();

    let model = fit(&history, &FitConfig::default()).unwrap();
    assert_eq!(model.train_end(), sim_start);
    let scenarios = sample_scenarios(&model, sim_start, 24, 50, 9).unwrap();
    assert_eq!((scenarios.horizon(), scenarios.count()), (24, 50));

    let s0 = cfg.volume(cfg.h_init);
    let p = MpcProblem::from_config(&cfg, s0, scenarios, cfg.demand.horizon(sim_start, 24));
    let plan = solve(&p, &SolverOptions::default()).unwrap();
    assert!(plan.converged);
    assert!(plan.u.iter().all(|u| (cfg.u_min..=cfg.u_max).contains(u)));

    let rc = RecedingConfig {
        scenarios: 50,
        ..RecedingConfig::default()
    };
    for policy in Policy::ALL {
        let traj = run_receding_horizon(policy, &history, &truth, &cfg, &rc, 96).unwrap();
        assert_eq!(traj.len(), 96);
        traj.check_mass_balance().unwrap();
        let eval = evaluate_trajectory(&traj, &cfg, DEFAULT_DRY_WEIGHT);
        assert_eq!(eval.len(), 96);
        assert!(eval.total() >= 0.0);
        assert_eq!(eval.cumulative.last().copied(), Some(eval.total()));
    }
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let data = record();
    let sim_start = Utc.with_ymd_and_hms(1998, 3, 1, 0, 0, 0).unwrap();
    let history = data.window(data.start(), sim_start).unwrap();
    let truth = data.window(sim_start, data.end()).unwrap();
    let cfg = small_lake();
    let rc = RecedingConfig {
        scenarios: 30,
        seed: 11,
        ..RecedingConfig::default()
    };
    let a = run_receding_horizon(Policy::Scenario, &history, &truth, &cfg, &rc, 48).unwrap();
    let b = run_receding_horizon(Policy::Scenario, &history, &truth, &cfg, &rc, 48).unwrap();
    assert_eq!(a.u, b.u);
    assert_eq!(a.s, b.s);
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = record();

    let inflow_path = dir.path().join("inflow.csv");
    write_inflow_csv(&inflow_path, &data).unwrap();
    let loaded = load_inflow_csv(&inflow_path).unwrap();
    assert_eq!(loaded.start(), data.start());
    assert_eq!(loaded.values(), data.values());

    let cfg = small_lake();
    cfg.demand.write_csv(dir.path().join("demand.csv")).unwrap();
    cfg.write(dir.path().join("reservoir.cfg"), "demand.csv").unwrap();
    let back = ReservoirConfig::load(dir.path().join("reservoir.cfg")).unwrap();
    assert_eq!(back, cfg);

    let model = fit(&data, &FitConfig::default()).unwrap();
    let model_path = dir.path().join("model.toml");
    model.save(&model_path).unwrap();
    assert_eq!(AdditiveModel::load(&model_path).unwrap(), model);
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_inflow_csv(dir.path().join("nope.csv")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
    assert!(err.is_input_error());
}
