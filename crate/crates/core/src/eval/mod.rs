//! A-posteriori evaluation: nonlinear cost and run metrics, oracle-normalised
//! Monte Carlo comparison of policies, and the synthetic inflow generator.

mod cost;
mod montecarlo;
mod synth;

pub use cost::{
    evaluate_trajectory, nonlinear_cost, EvaluationRecord, StepCost, DEFAULT_DRY_WEIGHT,
    DEFICIT_TOLERANCE, LEVEL_TOLERANCE,
};
pub use montecarlo::{
    monte_carlo_compare, LabelledPolicy, MonteCarloConfig, MonteCarloReport, PolicyResult,
    PolicySummary, ReplicateFailure, ReplicateOutcome,
};
pub use synth::{synth_dataset, SynthSpec};
