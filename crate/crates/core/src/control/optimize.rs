use super::{project_box, stationarity_residual, ReducedProblem};
use crate::error::{Error, Result};
use crate::sensitivity::AdjointSnapshot;
use crate::state::{Control, Trajectory};

/// How the trial step of each line search is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Always start from `alpha0`.
    Fixed,
    /// Start from the short Barzilai–Borwein step `⟨s, y⟩/⟨y, y⟩` of the
    /// last two iterates, falling back to `alpha0` on the first iteration or when the
    /// curvature `⟨s, y⟩` is not positive.
    #[default]
    BarzilaiBorwein,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeParams {
    pub max_iter: usize,
    /// Stop once the stationarity residual (with step 1) drops to this.
    pub tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    pub alpha0: f64,
    pub max_halvings: usize,
    pub step_rule: StepRule,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            c1: 1e-4,
            alpha0: 1.0,
            max_halvings: 40,
            step_rule: StepRule::default(),
        }
    }
}

impl OptimizeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("tol", self.tol)?;
        positive("alpha0", self.alpha0)?;
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "c1 must lie in (0, 1), got {}",
                self.c1
            )));
        }
        Ok(())
    }
}

/// One row of the iterate history. Row 0 is the (projected) initial control
/// with step 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iterate {
    pub iteration: usize,
    pub cost: f64,
    pub residual: f64,
    /// Accepted step length that produced this iterate.
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The line search failed while the predicted decrease was below the
    /// round-off level of the cost, so no further progress is measurable.
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub history: Vec<Iterate>,
    pub control: Control,
    pub trajectory: Trajectory,
    pub adjoint: Vec<AdjointSnapshot>,
    pub gradient: Control,
    pub termination: Termination,
}

impl OptimizeReport {
    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |it| it.residual)
    }
}

const MIN_STEP: f64 = 1e-10;
const MAX_STEP: f64 = 1e10;
/// Relative size of cost changes that cannot be told apart from rounding.
const ROUND_OFF: f64 = 64.0 * f64::EPSILON;

/// Projected gradient descent with Armijo backtracking on the reduced cost.
///
/// The accepted costs are non-increasing and every iterate lies in the box.
pub fn optimize(
    r0: &Control,
    problem: &ReducedProblem,
    params: &OptimizeParams,
) -> Result<OptimizeReport> {
    params.validate()?;
    let spec = &problem.spec;
    let mut r = project_box(r0, spec);
    let (mut traj, mut cost) = problem.evaluate(&r)?;
    let (mut adj, mut g) = problem.gradient(&r, &traj)?;
    let mut residual = stationarity_residual(&r, &g, spec, 1.0);
    let mut history = vec![Iterate {
        iteration: 0,
        cost,
        residual,
        step: 0.0,
    }];
    let mut previous: Option<(Control, Control)> = None;
    let mut stagnated = false;

    for iteration in 1..=params.max_iter {
        if residual <= params.tol {
            break;
        }
        let mut alpha = match (params.step_rule, &previous) {
            (StepRule::BarzilaiBorwein, Some((r_prev, g_prev))) => {
                let s = r.sub(r_prev);
                let y = g.sub(g_prev);
                let sy = s.dot(&y);
                if sy > 0.0 {
                    (sy / y.dot(&y)).clamp(MIN_STEP, MAX_STEP)
                } else {
                    params.alpha0
                }
            }
            _ => params.alpha0,
        };

        let mut accepted = None;
        let mut predicted = 0.0f64;
        for _ in 0..=params.max_halvings {
            let mut trial = r.clone();
            trial.axpy(-alpha, &g);
            let trial = project_box(&trial, spec);
            let decrease = g.dot(&r.sub(&trial));
            predicted = predicted.max(params.c1 * decrease);
            let (trial_traj, trial_cost) = problem.evaluate(&trial)?;
            if trial_cost <= cost - params.c1 * decrease {
                accepted = Some((trial, trial_traj, trial_cost));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, next_traj, next_cost)) = accepted else {
            if predicted <= ROUND_OFF * cost.abs() {
                stagnated = true;
                break;
            }
            return Err(Error::LineSearchFailure {
                iteration,
                halvings: params.max_halvings,
            });
        };

        let (next_adj, next_g) = problem.gradient(&next, &next_traj)?;
        previous = Some((
            std::mem::replace(&mut r, next),
            std::mem::replace(&mut g, next_g),
        ));
        traj = next_traj;
        adj = next_adj;
        cost = next_cost;
        residual = stationarity_residual(&r, &g, spec, 1.0);
        history.push(Iterate {
            iteration,
            cost,
            residual,
            step: alpha,
        });
    }

    let termination = if residual <= params.tol {
        Termination::Converged
    } else if stagnated {
        Termination::Stagnated
    } else {
        Termination::MaxIterations
    };
    Ok(OptimizeReport {
        history,
        control: r,
        trajectory: traj,
        adjoint: adj,
        gradient: g,
        termination,
    })
}
