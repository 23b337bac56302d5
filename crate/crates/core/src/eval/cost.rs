use serde::{Deserialize, Serialize};

use crate::controller::Trajectory;
use crate::hydrology::ReservoirConfig;

/// Weight `c_d` of the dry term, turning centimetres below the threshold into
/// the same order of magnitude as a release deficit in m³/s.
pub const DEFAULT_DRY_WEIGHT: f64 = 1e3;

/// An hour counts as dry (or flooded) only if the level is past the
/// threshold by more than this [m]; keeps rounding noise out of the counts.
pub const LEVEL_TOLERANCE: f64 = 1e-5;

/// An hour counts as a deficit hour only if `w − u` exceeds this [m³/s].
pub const DEFICIT_TOLERANCE: f64 = 1e-3;

/// Cost of one hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCost {
    /// `c_d · dry + deficit`.
    pub total: f64,
    /// `max(h_D − h, 0)` [m].
    pub dry: f64,
    /// `max(w − u, 0)` [m³/s].
    pub deficit: f64,
}

/// `J = c_d · max(h_D − h, 0) + max(w − u, 0)`.
pub fn nonlinear_cost(h: f64, u: f64, w: f64, h_dry: f64, c_d: f64) -> StepCost {
    let dry = (h_dry - h).max(0.0);
    let deficit = (w - u).max(0.0);
    StepCost {
        total: c_d * dry + deficit,
        dry,
        deficit,
    }
}

/// Per-hour costs of a run, their running sum and summary metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub cost: Vec<f64>,
    pub dry: Vec<f64>,
    pub deficit: Vec<f64>,
    /// `cumulative[t] = Σ_{i ≤ t} cost[i]`.
    pub cumulative: Vec<f64>,
    /// Lowest end-of-hour level [m]; `+∞` for an empty run.
    pub min_level: f64,
    /// Highest end-of-hour level [m]; `−∞` for an empty run.
    pub max_level: f64,
    pub dry_hours: usize,
    pub flood_hours: usize,
    /// Largest `w − u` [m³/s].
    pub deficit_peak: f64,
    pub deficit_hours: usize,
}

impl EvaluationRecord {
    fn empty() -> Self {
        Self {
            cost: Vec::new(),
            dry: Vec::new(),
            deficit: Vec::new(),
            cumulative: Vec::new(),
            min_level: f64::INFINITY,
            max_level: f64::NEG_INFINITY,
            dry_hours: 0,
            flood_hours: 0,
            deficit_peak: 0.0,
            deficit_hours: 0,
        }
    }

    /// Evaluate aligned level, release and demand series.
    pub fn from_series(
        h: &[f64],
        u: &[f64],
        w: &[f64],
        h_dry: f64,
        h_flood: f64,
        c_d: f64,
    ) -> Self {
        let mut rec = Self::empty();
        let mut running = 0.0;
        for ((&h, &u), &w) in h.iter().zip(u).zip(w) {
            let c = nonlinear_cost(h, u, w, h_dry, c_d);
            running += c.total;
            rec.cost.push(c.total);
            rec.dry.push(c.dry);
            rec.deficit.push(c.deficit);
            rec.cumulative.push(running);
            rec.min_level = rec.min_level.min(h);
            rec.max_level = rec.max_level.max(h);
            rec.dry_hours += usize::from(h < h_dry - LEVEL_TOLERANCE);
            rec.flood_hours += usize::from(h > h_flood + LEVEL_TOLERANCE);
            rec.deficit_peak = rec.deficit_peak.max(c.deficit);
            rec.deficit_hours += usize::from(w - u > DEFICIT_TOLERANCE);
        }
        rec
    }

    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    /// Cumulative cost at the end of the run.
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Record of this run followed by `next`; the cumulative curve of `next`
    /// is offset by this run's total.
    pub fn concat(&self, next: &EvaluationRecord) -> EvaluationRecord {
        let offset = self.total();
        let mut out = self.clone();
        out.cost.extend_from_slice(&next.cost);
        out.dry.extend_from_slice(&next.dry);
        out.deficit.extend_from_slice(&next.deficit);
        out.cumulative.extend(next.cumulative.iter().map(|c| c + offset));
        out.min_level = out.min_level.min(next.min_level);
        out.max_level = out.max_level.max(next.max_level);
        out.dry_hours += next.dry_hours;
        out.flood_hours += next.flood_hours;
        out.deficit_peak = out.deficit_peak.max(next.deficit_peak);
        out.deficit_hours += next.deficit_hours;
        out
    }
}

/// Nonlinear cost and metrics of a closed-loop run against `cfg`'s dry and
/// flood thresholds. `c_d` must be positive.
pub fn evaluate_trajectory(traj: &Trajectory, cfg: &ReservoirConfig, c_d: f64) -> EvaluationRecord {
    EvaluationRecord::from_series(&traj.h, &traj.u, &traj.w, cfg.h_dry, cfg.h_flood, c_d)
}
