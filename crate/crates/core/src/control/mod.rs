//! Tracking-type cost, the admissible box, the reduced gradient and the
//! projected-gradient optimizer.

mod optimize;

pub use optimize::{optimize, Iterate, OptimizeParams, OptimizeReport, StepRule, Termination};

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::sensitivity::{solve_adjoint, AdjointSnapshot};
use crate::state::{solve_state, Control, Scheme, SourceSpec, TimeProfile, Trajectory};

/// A box bound on the control.
#[derive(Debug, Clone, PartialEq)]
pub enum Bound {
    Constant(f64),
    /// Spatially varying, constant in time.
    Field(ScalarField),
    /// One field per control step.
    SpaceTime(Control),
}

impl Bound {
    #[inline]
    fn value(&self, step: usize, cell: usize) -> f64 {
        match self {
            Bound::Constant(c) => *c,
            Bound::Field(f) => f.values()[cell],
            Bound::SpaceTime(c) => c.step(step).values()[cell],
        }
    }

    fn steps(&self) -> Option<usize> {
        match self {
            Bound::SpaceTime(c) => Some(c.nt()),
            _ => None,
        }
    }

    fn cells(&self) -> Option<usize> {
        match self {
            Bound::Constant(_) => None,
            Bound::Field(f) => Some(f.grid().len()),
            Bound::SpaceTime(c) => Some(c.grid().len()),
        }
    }
}

/// Weights, targets and bounds of the control problem.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// Terminal target `φ_Ω`.
    pub phi_omega: ScalarField,
    /// Space-time target `φ_Q`.
    pub phi_q: TimeProfile,
    pub r_min: Bound,
    pub r_max: Bound,
}

impl CostSpec {
    pub fn new(
        beta: [f64; 3],
        phi_omega: ScalarField,
        phi_q: TimeProfile,
        r_min: Bound,
        r_max: Bound,
    ) -> Result<Self> {
        let spec = Self {
            beta1: beta[0],
            beta2: beta[1],
            beta3: beta[2],
            phi_omega,
            phi_q,
            r_min,
            r_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks nonnegative weights that are not all zero and `r_min ≤ r_max`.
    pub fn validate(&self) -> Result<()> {
        let betas = [self.beta1, self.beta2, self.beta3];
        if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "cost weights must be nonnegative, got {betas:?}"
            )));
        }
        if betas.iter().all(|&b| b == 0.0) {
            return Err(Error::InvalidArgument(
                "cost weights beta1, beta2, beta3 are not all zero".into(),
            ));
        }
        self.phi_omega.grid().ensure_same(&self.phi_q.grid())?;
        let steps = self.r_min.steps().or(self.r_max.steps()).unwrap_or(1);
        let cells = self
            .r_min
            .cells()
            .or(self.r_max.cells())
            .unwrap_or(1)
            .min(self.phi_omega.grid().len());
        for bound in [&self.r_min, &self.r_max] {
            if let Some(c) = bound.cells() {
                if c != self.phi_omega.grid().len() {
                    return Err(Error::GridMismatch("control bound grid differs".into()));
                }
            }
        }
        if let (Some(a), Some(b)) = (self.r_min.steps(), self.r_max.steps()) {
            if a != b {
                return Err(Error::GridMismatch("control bounds have different step counts".into()));
            }
        }
        for k in 0..steps {
            for cell in 0..cells {
                let (lo, hi) = (self.r_min.value(k, cell), self.r_max.value(k, cell));
                if !(lo <= hi) {
                    return Err(Error::InvalidArgument(format!(
                        "r_min <= r_max violated at step {k}, cell {cell}: {lo} > {hi}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_control(&self, r: &Control) -> Result<()> {
        self.phi_omega.grid().ensure_same(r.grid())?;
        for bound in [&self.r_min, &self.r_max] {
            if let Some(n) = bound.steps() {
                if n != r.nt() {
                    return Err(Error::GridMismatch(format!(
                        "bound has {n} steps, control has {}",
                        r.nt()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Clamps `v` into `[r_min, r_max]` at control step `k`, cell `cell`.
    #[inline]
    fn clamp(&self, k: usize, cell: usize, v: f64) -> f64 {
        v.max(self.r_min.value(k, cell)).min(self.r_max.value(k, cell))
    }
}

/// `(β₁/2)‖φ(T) - φ_Ω‖² + (β₂/2) dt Σ_{k≥1} ‖φᵏ - φ_Q(t_k)‖² + (β₃/2)‖R‖²_Q`.
pub fn cost(traj: &Trajectory, r: &Control, spec: &CostSpec) -> Result<f64> {
    traj.ensure_matches(r)?;
    traj.grid().ensure_same(spec.phi_omega.grid())?;
    let terminal = traj.final_phi().sub(&spec.phi_omega);
    let mut total = 0.5 * spec.beta1 * terminal.dot(&terminal);
    if spec.beta2 != 0.0 {
        let tracking: f64 = (1..=traj.nt())
            .map(|k| {
                let e = traj.phi(k).sub(&spec.phi_q.at(traj.time(k)));
                e.dot(&e)
            })
            .sum();
        total += 0.5 * spec.beta2 * traj.dt() * tracking;
    }
    total += 0.5 * spec.beta3 * r.dot(r);
    Ok(total)
}

/// Pointwise clamp onto the admissible box.
pub fn project_box(r: &Control, spec: &CostSpec) -> Control {
    let mut out = r.clone();
    for (k, step) in out.values_mut().iter_mut().enumerate() {
        for (cell, v) in step.values_mut().iter_mut().enumerate() {
            *v = spec.clamp(k, cell, *v);
        }
    }
    out
}

/// Gradient of the reduced cost in L²(Q): `p₁ + β₃ R`, with `p₁` on
/// interval `k` paired with `R^k`.
pub fn reduced_gradient(
    r: &Control,
    base: &Trajectory,
    adj: &[AdjointSnapshot],
    spec: &CostSpec,
) -> Result<Control> {
    base.ensure_matches(r)?;
    if adj.len() != r.nt() {
        return Err(Error::GridMismatch(format!(
            "{} adjoint snapshots for {} control steps",
            adj.len(),
            r.nt()
        )));
    }
    let values = adj
        .iter()
        .zip(r.values())
        .map(|(a, rk)| {
            let mut g = a.p1.clone();
            g.axpy(spec.beta3, rk);
            g
        })
        .collect();
    Control::new(*r.grid(), r.dt(), values)
}

/// `‖R - P(R - step g)‖_{L²(Q)}`; zero exactly at solutions of the
/// variational inequality.
pub fn stationarity_residual(r: &Control, g: &Control, spec: &CostSpec, step: f64) -> f64 {
    let mut trial = r.clone();
    trial.axpy(-step, g);
    r.sub(&project_box(&trial, spec)).norm()
}

/// `max |R - max(R_min, min(-p₁/β₃, R_max))|` over all space-time nodes, or
/// `None` when `β₃ = 0` and the formula is undefined.
pub fn projection_formula_deviation(
    r: &Control,
    adj: &[AdjointSnapshot],
    spec: &CostSpec,
) -> Option<f64> {
    if spec.beta3 <= 0.0 {
        return None;
    }
    let mut dev = 0.0f64;
    for (k, (rk, a)) in r.values().iter().zip(adj).enumerate() {
        for (cell, (&rv, &p1)) in rk.values().iter().zip(a.p1.values()).enumerate() {
            let target = spec.clamp(k, cell, -p1 / spec.beta3);
            dev = dev.max((rv - target).abs());
        }
    }
    Some(dev)
}

/// The reduced problem `R ↦ J(S(R), R)` with everything but the control fixed.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub phi0: ScalarField,
    pub source: SourceSpec,
    pub spec: CostSpec,
    pub scheme: Scheme,
}

impl ReducedProblem {
    /// Forward solve and cost.
    pub fn evaluate(&self, r: &Control) -> Result<(Trajectory, f64)> {
        self.spec.check_control(r)?;
        let traj = solve_state(&self.phi0, &self.source, r, &self.scheme)?;
        let j = cost(&traj, r, &self.spec)?;
        Ok((traj, j))
    }

    pub fn cost(&self, r: &Control) -> Result<f64> {
        self.evaluate(r).map(|(_, j)| j)
    }

    /// Adjoint solve along `traj` and the reduced gradient.
    pub fn gradient(
        &self,
        r: &Control,
        traj: &Trajectory,
    ) -> Result<(Vec<AdjointSnapshot>, Control)> {
        let adj = solve_adjoint(traj, &self.spec, &self.scheme)?;
        let g = reduced_gradient(r, traj, &adj, &self.spec)?;
        Ok((adj, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid2D;

    fn grid() -> Grid2D {
        Grid2D::unit_square(8).unwrap()
    }

    fn spec(beta: [f64; 3], lo: f64, hi: f64) -> CostSpec {
        let g = grid();
        CostSpec::new(
            beta,
            ScalarField::zeros(g),
            TimeProfile::zero(g),
            Bound::Constant(lo),
            Bound::Constant(hi),
        )
        .unwrap()
    }

    #[test]
    fn weights_must_not_all_vanish() {
        let g = grid();
        let err = CostSpec::new(
            [0.0; 3],
            ScalarField::zeros(g),
            TimeProfile::zero(g),
            Bound::Constant(-1.0),
            Bound::Constant(1.0),
        )
        .unwrap_err();
        assert!(err.to_string().contains("not all zero"));
    }

    #[test]
    fn bounds_must_be_ordered() {
        let g = grid();
        let lo = ScalarField::from_fn(g, |x, _| x - 0.5);
        let err = CostSpec::new(
            [1.0, 0.0, 0.0],
            ScalarField::zeros(g),
            TimeProfile::zero(g),
            Bound::Field(lo),
            Bound::Constant(0.2),
        )
        .unwrap_err();
        assert!(err.to_string().contains("r_min <= r_max"));
    }

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let s = spec([1.0, 0.0, 0.0], -1.0, 1.0);
        let g = grid();
        let r = Control::from_fn(g, 3, 0.1, |x, y, t| 4.0 * (x - y) + t).unwrap();
        let p = project_box(&r, &s);
        assert!(p.max_abs() <= 1.0);
        assert_eq!(project_box(&p, &s), p);
        let inside = Control::from_fn(g, 3, 0.1, |x, _, _| 0.5 * x).unwrap();
        assert_eq!(project_box(&inside, &s), inside);
        let two = Control::from_fn(g, 2, 0.1, |_, _, _| 2.0).unwrap();
        assert!(project_box(&two, &s)
            .values()
            .iter()
            .all(|f| f.values().iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn projection_is_nonexpansive() {
        let s = spec([1.0, 0.0, 0.0], -0.3, 0.6);
        let g = grid();
        let a = Control::from_fn(g, 4, 0.1, |x, y, t| (7.0 * x * y).sin() + t).unwrap();
        let b = Control::from_fn(g, 4, 0.1, |x, y, t| x - y * t).unwrap();
        let d = project_box(&a, &s).sub(&project_box(&b, &s)).norm();
        assert!(d <= a.sub(&b).norm());
    }

    #[test]
    fn residual_cases() {
        let s = spec([1.0, 0.0, 1.0], -1.0, 1.0);
        let g = grid();
        let r = Control::from_fn(g, 2, 0.1, |x, _, _| 0.5 * x).unwrap();
        let zero = Control::zeros(g, 2, 0.1).unwrap();
        assert_eq!(stationarity_residual(&r, &zero, &s, 1.0), 0.0);
        let on_lower = Control::from_fn(g, 2, 0.1, |_, _, _| -1.0).unwrap();
        let push_out = Control::from_fn(g, 2, 0.1, |x, _, _| 1.0 + x).unwrap();
        assert_eq!(stationarity_residual(&on_lower, &push_out, &s, 1.0), 0.0);
        let small = Control::from_fn(g, 2, 0.1, |x, y, _| 0.1 * (x - y)).unwrap();
        let res = stationarity_residual(&r, &small, &s, 0.7);
        assert!((res - 0.7 * small.norm()).abs() < 1e-14);
    }
}
