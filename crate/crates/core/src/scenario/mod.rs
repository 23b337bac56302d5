//! Additive trend + seasonality inflow model and scenario sampling.
//!
//! The model is `y(t) = g(t) + s(t) + e(t)` with a continuous piecewise-linear
//! trend `g`, Fourier seasonality `s` and Gaussian residuals `e`. Time is
//! measured in hours since the model epoch (the first training sample).

mod fit;
mod model;
mod sample;

pub use fit::{fit, fit_with_diagnostics, FitConfig, FitDiagnostics};
pub use model::{AdditiveModel, FourierBlock};
pub use sample::{
    nominal_forecast, sample_scenarios, sample_scenarios_with, SamplingOptions, ScenarioMatrix,
};
