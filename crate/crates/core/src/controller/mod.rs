//! Scenario MPC: scenario counts, the multi-scenario release problem and its
//! solver, and the receding-horizon simulation driver.

mod bound;
mod problem;
mod receding;
mod solver;

pub use bound::{required_scenarios, ScenarioBound};
pub use problem::{propagate, scenario_objective, MpcProblem, ObjectiveKind, DEFAULT_SCALING};
pub use solver::{solve, ControlPlan, IterationRecord, SolverOptions};
pub use receding::{
    run_receding_horizon, ModelSchedule, Policy, RecedingConfig, RefitFailure, RunStats,
    Simulation, Trajectory,
};
