use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the scenario-count bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBound {
    /// Tolerated fraction of violated chance constraints, in (0, 1).
    pub epsilon: f64,
    /// Probability of an infeasible solution, in (0, 1).
    pub beta: f64,
    /// Prediction horizon H [steps].
    pub horizon: usize,
}

impl ScenarioBound {
    pub fn new(epsilon: f64, beta: f64, horizon: usize) -> Result<Self> {
        let b = Self {
            epsilon,
            beta,
            horizon,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "beta must be in (0, 1), got {}",
                self.beta
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// `(2/ε)(ln(1/β) + H)` before rounding.
    pub fn raw(&self) -> f64 {
        2.0 / self.epsilon * ((1.0 / self.beta).ln() + self.horizon as f64)
    }
}

/// Number of scenarios `K = ⌈(2/ε)(ln(1/β) + H)⌉`.
///
/// ε = 1 is accepted as the limiting case of the bound.
pub fn required_scenarios(bound: &ScenarioBound) -> Result<usize> {
    bound.validate()?;
    // Guard against 378.00000000001-style rounding noise pushing K up by one.
    let raw = bound.raw();
    let k = (raw - 1e-9 * raw).ceil();
    Ok(k as usize)
}
