use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::{scenario_objective, MpcProblem, ObjectiveKind, ScenarioSet};
use crate::error::{Error, Result};
use crate::SECONDS_PER_STEP;

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative optimality tolerance, certified by a duality gap.
    pub tol: f64,
    /// Cap on Newton iterations across all smoothing stages.
    pub max_iters: usize,
    /// Initial release plan [m³/s]; projected onto the box.
    #[serde(skip)]
    pub warm_start: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 500,
            warm_start: None,
        }
    }
}

/// One accepted iteration, in physical objective units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Smoothing parameter (0 for the quadratic objective).
    pub mu: f64,
    /// Smoothed objective at the iterate.
    pub smoothed: f64,
    /// Exact objective at the iterate.
    pub objective: f64,
    /// Best exact objective so far.
    pub best: f64,
    /// Duality gap certified at the iterate.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlan {
    /// Release plan over the horizon [m³/s], inside the box.
    pub u: Vec<f64>,
    pub objective_value: f64,
    pub solver_iters: usize,
    /// True when the duality gap is within `tol` of the objective.
    pub converged: bool,
    /// Certified bound on `objective_value − optimum`.
    pub gap: f64,
    pub trace: Vec<IterationRecord>,
}

/// The problem in normalised variables `v = (u − u_min)/(u_max − u_min)`
/// and volumes `x = (s − s_min)/(s_max − s_min)`, divided by a constant so
/// that the demand term has unit weight. The minimiser is unchanged.
struct Scaled {
    h: usize,
    /// Level change per unit of normalised release over one step.
    beta: f64,
    /// Weight of the volume terms.
    weight: f64,
    /// Weight of the demand term.
    demand_weight: f64,
    square: bool,
    /// Normalised volumes with `v = 0`, per distinct scenario.
    free_volume: Vec<Vec<f64>>,
    probs: Vec<f64>,
    demand: Vec<f64>,
    /// Physical objective = `unit × scaled objective`.
    unit: f64,
}

impl Scaled {
    fn new(p: &MpcProblem) -> Self {
        let h = p.horizon();
        let range_u = p.u_max - p.u_min;
        let range_s = p.s_max - p.s_min;
        let set = ScenarioSet::new(&p.scenarios);
        let free_volume = set
            .columns
            .iter()
            .map(|q| {
                let mut s = p.s0;
                q.iter()
                    .map(|q| {
                        s += SECONDS_PER_STEP * (q - p.u_min);
                        (s - p.s_min) / range_s
                    })
                    .collect()
            })
            .collect();
        let ratio = p.scaling * range_s / range_u;
        let (weight, demand_weight, square, unit) = match p.objective {
            ObjectiveKind::SumOfNorms => (ratio, 1.0, false, range_u),
            ObjectiveKind::Quadratic { lambda } => {
                (ratio * ratio, lambda, true, range_u * range_u)
            }
        };
        Self {
            h,
            beta: SECONDS_PER_STEP * range_u / range_s,
            weight,
            demand_weight,
            square,
            free_volume,
            probs: set.weights,
            demand: p.demand.iter().map(|w| (w - p.u_min) / range_u).collect(),
            unit,
        }
    }
}

struct Eval {
    smoothed: f64,
    exact: f64,
    grad: Vec<f64>,
    lower_bound: f64,
    /// `−Σ_i min(g_i(0 − v_i), g_i(1 − v_i)) ≥ 0`; zero at a stationary point.
    stationarity: f64,
    /// Row-major H×H Hessian of the smoothed objective.
    hessian: Vec<f64>,
}

/// Accumulates one term `ω ψ(r)` into value, residual gradient and Hessian.
struct Term {
    smoothed: f64,
    exact: f64,
    dual: f64,
    /// Coefficient of `I` in the Hessian.
    diag: f64,
    /// Coefficient of `r rᵀ` in the Hessian.
    outer: f64,
    /// Gradient is `grad_coef × r`.
    grad_coef: f64,
}

fn term(r_sq: f64, omega: f64, mu: f64, square: bool) -> Term {
    if square {
        Term {
            smoothed: omega * r_sq,
            exact: omega * r_sq,
            dual: omega * r_sq,
            diag: 2.0 * omega,
            outer: 0.0,
            grad_coef: 2.0 * omega,
        }
    } else {
        let phi = (r_sq + mu * mu).sqrt();
        let norm = r_sq.sqrt();
        if phi == 0.0 {
            // r = 0 and mu = 0: value 0, zero subgradient is valid.
            return Term {
                smoothed: 0.0,
                exact: 0.0,
                dual: 0.0,
                diag: 0.0,
                outer: 0.0,
                grad_coef: 0.0,
            };
        }
        Term {
            smoothed: omega * phi,
            exact: omega * norm,
            dual: omega * r_sq / phi,
            diag: omega / phi,
            outer: -omega / (phi * phi * phi),
            grad_coef: omega / phi,
        }
    }
}

impl Scaled {
    fn evaluate(&self, v: &[f64], mu: f64, want_hessian: bool) -> Eval {
        let h = self.h;
        let mut cum = vec![0.0; h];
        let mut acc = 0.0;
        for (c, vi) in cum.iter_mut().zip(v) {
            acc += vi;
            *c = acc;
        }
        // z = Σ ∂/∂x of the volume terms; the v-gradient is −β Lᵀ z.
        let mut z = vec![0.0; h];
        let mut m = if want_hessian { vec![0.0; h * h] } else { Vec::new() };
        let mut diag = 0.0;
        let mut smoothed = 0.0;
        let mut exact = 0.0;
        let mut dual = 0.0;
        let mut x = vec![0.0; h];
        let mut y = vec![0.0; h];
        for (a, p) in self.free_volume.iter().zip(&self.probs) {
            let omega = self.weight * p;
            let mut x_sq = 0.0;
            let mut y_sq = 0.0;
            for i in 0..h {
                x[i] = a[i] - self.beta * cum[i];
                y[i] = 1.0 - x[i];
                x_sq += x[i] * x[i];
                y_sq += y[i] * y[i];
            }
            let tx = term(x_sq, omega, mu, self.square);
            let ty = term(y_sq, omega, mu, self.square);
            smoothed += tx.smoothed + ty.smoothed;
            exact += tx.exact + ty.exact;
            dual += tx.dual + ty.dual;
            for i in 0..h {
                z[i] += tx.grad_coef * x[i] - ty.grad_coef * y[i];
            }
            if want_hessian {
                diag += tx.diag + ty.diag;
                for (r, outer) in [(&x, tx.outer), (&y, ty.outer)] {
                    if outer != 0.0 {
                        for i in 0..h {
                            let ri = outer * r[i];
                            let row = &mut m[i * h..(i + 1) * h];
                            for (mij, rj) in row.iter_mut().zip(r.iter()) {
                                *mij += ri * rj;
                            }
                        }
                    }
                }
            }
        }
        // Gradient: −β Lᵀ z, i.e. a reverse cumulative sum.
        let mut grad = vec![0.0; h];
        let mut acc = 0.0;
        for i in (0..h).rev() {
            acc += z[i];
            grad[i] = -self.beta * acc;
        }
        let mut hessian = Vec::new();
        if want_hessian {
            for i in 0..h {
                m[i * h + i] += diag;
            }
            // β² Lᵀ M L: reverse cumulative sums over rows, then columns.
            for i in (0..h.saturating_sub(1)).rev() {
                for j in 0..h {
                    m[i * h + j] += m[(i + 1) * h + j];
                }
            }
            for i in 0..h {
                for j in (0..h.saturating_sub(1)).rev() {
                    m[i * h + j] += m[i * h + j + 1];
                }
            }
            let b2 = self.beta * self.beta;
            m.iter_mut().for_each(|e| *e *= b2);
            hessian = m;
        }

        // Gradient of the volume terms alone, for the second dual point below.
        let volume_grad = if self.square { Vec::new() } else { grad.clone() };
        let mut r_sq = 0.0;
        for (vi, wi) in v.iter().zip(&self.demand) {
            r_sq += (vi - wi) * (vi - wi);
        }
        let td = term(r_sq, self.demand_weight, mu, self.square);
        smoothed += td.smoothed;
        exact += td.exact;
        dual += td.dual;
        for i in 0..h {
            grad[i] += td.grad_coef * (v[i] - self.demand[i]);
        }
        if want_hessian {
            for i in 0..h {
                hessian[i * h + i] += td.diag;
                if td.outer != 0.0 {
                    let ri = td.outer * (v[i] - self.demand[i]);
                    for j in 0..h {
                        hessian[i * h + j] += ri * (v[j] - self.demand[j]);
                    }
                }
            }
        }
        // Weak duality over the box [0, 1]^H.
        let box_term: f64 = grad
            .iter()
            .zip(v)
            .map(|(g, vi)| (-g * vi).min(g * (1.0 - vi)))
            .sum();
        let mut lower_bound = dual + box_term;
        if !self.square {
            // Near `u = w` the smoothed residual direction says little about
            // the demand term's subgradient. Also try the dual point that
            // cancels the volume gradient as far as the ball allows; where
            // the demand sits on a release bound and the gradient pushes
            // outwards, cancelling gains nothing, so that component is 0.
            let target: Vec<f64> = volume_grad
                .iter()
                .zip(&self.demand)
                .map(|(g, w)| match () {
                    _ if *w >= 1.0 => (-g).min(0.0),
                    _ if *w <= 0.0 => (-g).max(0.0),
                    _ => -g,
                })
                .collect();
            let t_norm = target.iter().map(|t| t * t).sum::<f64>().sqrt();
            let shrink = if t_norm > self.demand_weight { self.demand_weight / t_norm } else { 1.0 };
            let mut alt = dual - td.dual;
            for (((g, t), vi), wi) in volume_grad.iter().zip(&target).zip(v).zip(&self.demand) {
                let y = shrink * t;
                alt += -g * vi - y * wi + (g + y).min(0.0);
            }
            lower_bound = lower_bound.max(alt);
        }
        Eval {
            smoothed,
            exact,
            grad,
            lower_bound,
            stationarity: -box_term,
            hessian,
        }
    }
}

fn project(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
}

/// Solve `H_FF d = −g_F` with increasing diagonal damping until positive definite.
fn newton_direction(hessian: &[f64], h: usize, grad: &[f64], free: &[usize]) -> Option<Vec<f64>> {
    let n = free.len();
    let mut sub = DMatrix::<f64>::zeros(n, n);
    let mut scale = 0.0f64;
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            sub[(a, b)] = hessian[i * h + j];
        }
        scale = scale.max(hessian[i * h + i].abs());
    }
    let rhs = DVector::from_iterator(n, free.iter().map(|&i| -grad[i]));
    let mut damping = 0.0;
    for _ in 0..12 {
        let mut m = sub.clone();
        for a in 0..n {
            m[(a, a)] += damping;
        }
        if let Some(chol) = m.cholesky() {
            let d = chol.solve(&rhs);
            if d.iter().all(|x| x.is_finite()) {
                return Some(d.iter().copied().collect());
            }
        }
        damping = if damping == 0.0 { 1e-12 * scale.max(1e-300) } else { damping * 100.0 };
    }
    None
}

/// Minimise the scenario MPC objective over the release box.
///
/// Method: projected Newton (Bertsekas) on the objective with every norm
/// replaced by `sqrt(‖r‖² + μ²)`, with continuation `μ → μ/10`. Each iterate
/// also yields a dual-feasible point — the normalised residuals `r/φ` — and
/// hence a lower bound on the true minimum by weak duality. The solver stops
/// once `objective − bound ≤ tol·objective` and returns the iterate with the
/// lowest exact objective seen. The quadratic objective is smooth and uses the
/// same loop with `μ = 0`.
pub fn solve(p: &MpcProblem, opts: &SolverOptions) -> Result<ControlPlan> {
    p.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("solver tol must be positive, got {}", opts.tol)));
    }
    let sc = Scaled::new(p);
    let h = sc.h;
    let range_u = p.u_max - p.u_min;

    let mut v: Vec<f64> = match &opts.warm_start {
        Some(u) if u.len() == h && u.iter().all(|x| x.is_finite()) => {
            u.iter().map(|u| (u - p.u_min) / range_u).collect()
        }
        Some(u) if u.len() != h => {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} entries for a horizon of {h}",
                u.len()
            )))
        }
        _ => sc.demand.clone(),
    };
    project(&mut v);

    let total_weight = 2.0 * sc.weight + sc.demand_weight;
    let mut mu = if sc.square { 0.0 } else { 0.1 };
    let mut trace = Vec::new();
    let mut best_v = v.clone();
    let mut best = f64::INFINITY;
    let mut best_lb = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iters = 0;

    let diverged = |what: &str| Error::SolverDiverged(format!("non-finite {what}"));
    let mut e = sc.evaluate(&v, mu, true);
    loop {
        if !e.smoothed.is_finite() || !e.exact.is_finite() {
            return Err(diverged("objective"));
        }
        if e.exact < best {
            best = e.exact;
            best_v.clone_from(&v);
        }
        best_lb = best_lb.max(e.lower_bound);
        let gap = (best - best_lb).max(0.0);
        trace.push(IterationRecord {
            iteration: iters,
            mu,
            smoothed: e.smoothed * sc.unit,
            objective: e.exact * sc.unit,
            best: best * sc.unit,
            gap: gap * sc.unit,
        });
        if gap <= opts.tol * best.abs() {
            converged = true;
            break;
        }
        if iters >= opts.max_iters {
            break;
        }
        iters += 1;

        // Bertsekas' ε-active set.
        let pg: f64 = v
            .iter()
            .zip(&e.grad)
            .map(|(vi, g)| (vi - (vi - g).clamp(0.0, 1.0)).powi(2))
            .sum::<f64>()
            .sqrt();
        let eps = pg.min(1e-3);
        let active: Vec<bool> = v
            .iter()
            .zip(&e.grad)
            .map(|(vi, g)| (*vi <= eps && *g > 0.0) || (*vi >= 1.0 - eps && *g < 0.0))
            .collect();
        let free: Vec<usize> = (0..h).filter(|i| !active[*i]).collect();

        let mut d = vec![0.0; h];
        if !free.is_empty() {
            match newton_direction(&e.hessian, h, &e.grad, &free) {
                Some(df) => free.iter().zip(df).for_each(|(&i, x)| d[i] = x),
                None => free.iter().for_each(|&i| d[i] = -e.grad[i]),
            }
        }
        for i in (0..h).filter(|i| active[*i]) {
            let hii = e.hessian[i * h + i];
            d[i] = -e.grad[i] / if hii > 0.0 { hii } else { 1.0 };
        }
        // Decrease predicted by the full projected Newton step.
        let predicted: f64 = -e
            .grad
            .iter()
            .zip(v.iter().zip(&d))
            .map(|(g, (x, d))| g * ((x + d).clamp(0.0, 1.0) - x))
            .sum::<f64>();

        let mut step = None;
        for direction in [d, e.grad.iter().map(|g| -g).collect::<Vec<_>>()] {
            let mut alpha = 1.0;
            while alpha > 1e-12 {
                let mut trial: Vec<f64> = v.iter().zip(&direction).map(|(x, d)| x + alpha * d).collect();
                project(&mut trial);
                let slope: f64 = e.grad.iter().zip(trial.iter().zip(&v)).map(|(g, (t, x))| g * (t - x)).sum();
                if slope < 0.0 {
                    let ft = sc.evaluate(&trial, mu, false).smoothed;
                    if ft < e.smoothed && ft <= e.smoothed + 1e-4 * slope {
                        step = Some(trial);
                        break;
                    }
                } else if slope == 0.0 {
                    break;
                }
                alpha *= 0.5;
            }
            if step.is_some() {
                break;
            }
        }

        // Smoothed sub-problem solved to well below its smoothing error.
        let stage_done = match &step {
            None => true,
            Some(_) => {
                0.5 * predicted.max(0.0) <= 1e-2 * total_weight * mu
                    && e.stationarity <= 0.5 * total_weight * mu
            }
        };
        let stalled = step.is_none();
        if let Some(next) = step {
            v = next;
        }
        if stage_done {
            if sc.square || mu < 1e-15 {
                if stalled {
                    // No further progress possible at machine precision.
                    break;
                }
            } else {
                mu *= 0.1;
            }
        }
        e = sc.evaluate(&v, mu, true);
    }

    let u: Vec<f64> = best_v
        .iter()
        .map(|v| (p.u_min + range_u * v).clamp(p.u_min, p.u_max))
        .collect();
    if u.iter().any(|x| !x.is_finite()) {
        return Err(diverged("release plan"));
    }
    let objective_value = scenario_objective(p, &u)?;
    Ok(ControlPlan {
        u,
        objective_value,
        solver_iters: iters,
        converged,
        gap: (best - best_lb).max(0.0) * sc.unit,
        trace,
    })
}
