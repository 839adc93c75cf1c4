//! Forward solver for the Cahn–Hilliard–Darcy system with mass sources.
//!
//! The scheme is first-order semi-implicit: the biharmonic term is implicit,
//! `f'` is explicit with a linear stabilization `stab Δ(φⁿ⁺¹ - φⁿ)`, and the
//! convective flux `div(φ u)` plus both sources are explicit with the Darcy
//! velocity lagged at tⁿ.

mod scheme;

pub use scheme::{
    advance_phase, c0h1_norm, chemical_potential, darcy_solve, div_u_residual, double_well,
    energy, f_prime, mass, solve_state, step_state,
};

use crate::error::{Error, Result};
use crate::fields::{Grid2D, ScalarField, VectorField, DEFAULT_TOL};
use std::fmt;
use std::sync::Arc;

/// Numerical parameters shared by the forward, tangent and adjoint solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheme {
    /// Coefficient of the linear stabilization term.
    pub stab: f64,
    pub poisson_tol: f64,
    pub implicit_tol: f64,
}

impl Default for Scheme {
    fn default() -> Self {
        Self {
            stab: 2.0,
            poisson_tol: DEFAULT_TOL,
            implicit_tol: DEFAULT_TOL,
        }
    }
}

impl Scheme {
    /// Tolerance used for sensitivity runs, where solver residuals would
    /// otherwise show up in duality and gradient checks.
    pub const SENSITIVITY_TOL: f64 = 1e-12;

    pub fn with_tolerance(self, tol: f64) -> Self {
        Self {
            poisson_tol: tol,
            implicit_tol: tol,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stab.is_finite() && self.stab >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stabilization must be nonnegative, got {}",
                self.stab
            )));
        }
        for (name, tol) in [("poisson", self.poisson_tol), ("implicit", self.implicit_tol)] {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} tolerance must be positive, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// A scalar field that varies in time.
#[derive(Clone)]
pub enum TimeProfile {
    Steady(ScalarField),
    /// Field `k` is the value at `t = k dt`; queries snap to the nearest
    /// sample and clamp at the ends.
    Sampled { dt: f64, fields: Vec<ScalarField> },
    Function {
        grid: Grid2D,
        f: Arc<dyn Fn(f64) -> ScalarField + Send + Sync>,
    },
}

impl TimeProfile {
    pub fn zero(grid: Grid2D) -> Self {
        TimeProfile::Steady(ScalarField::zeros(grid))
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64) -> ScalarField + Send + Sync + 'static) -> Self {
        TimeProfile::Function {
            grid,
            f: Arc::new(f),
        }
    }

    pub fn grid(&self) -> Grid2D {
        match self {
            TimeProfile::Steady(s) => *s.grid(),
            TimeProfile::Sampled { fields, .. } => *fields[0].grid(),
            TimeProfile::Function { grid, .. } => *grid,
        }
    }

    pub fn at(&self, t: f64) -> ScalarField {
        match self {
            TimeProfile::Steady(s) => s.clone(),
            TimeProfile::Sampled { dt, fields } => {
                let k = (t / dt).round().max(0.0) as usize;
                fields[k.min(fields.len() - 1)].clone()
            }
            TimeProfile::Function { f, .. } => f(t),
        }
    }
}

impl fmt::Debug for TimeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeProfile::Steady(_) => f.write_str("TimeProfile::Steady"),
            TimeProfile::Sampled { dt, fields } => {
                write!(f, "TimeProfile::Sampled {{ dt: {dt}, len: {} }}", fields.len())
            }
            TimeProfile::Function { .. } => f.write_str("TimeProfile::Function"),
        }
    }
}

/// The given mass source `S(t)`; must have zero spatial mean at every time.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub profile: TimeProfile,
    pub description: String,
}

impl SourceSpec {
    pub fn zero(grid: Grid2D) -> Self {
        Self {
            profile: TimeProfile::zero(grid),
            description: "zero".into(),
        }
    }

    pub fn new(profile: TimeProfile, description: impl Into<String>) -> Self {
        Self {
            profile,
            description: description.into(),
        }
    }

    pub fn at(&self, t: f64) -> ScalarField {
        self.profile.at(t)
    }
}

/// Space-time control `R`, piecewise constant in time: `values[k]` acts on
/// `(t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    grid: Grid2D,
    dt: f64,
    values: Vec<ScalarField>,
}

impl Control {
    pub fn new(grid: Grid2D, dt: f64, values: Vec<ScalarField>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("control needs at least one step".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        for v in &values {
            grid.ensure_same(v.grid())?;
        }
        Ok(Self { grid, dt, values })
    }

    pub fn zeros(grid: Grid2D, nt: usize, dt: f64) -> Result<Self> {
        Self::new(grid, dt, vec![ScalarField::zeros(grid); nt])
    }

    /// Samples `f(x, y, t)` at cell centers and at the left endpoint of each
    /// time interval.
    pub fn from_fn(
        grid: Grid2D,
        nt: usize,
        dt: f64,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Self> {
        let values = (0..nt)
            .map(|k| {
                let t = k as f64 * dt;
                ScalarField::from_fn(grid, |x, y| f(x, y, t))
            })
            .collect();
        Self::new(grid, dt, values)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nt(&self) -> usize {
        self.values.len()
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.nt() as f64
    }

    pub fn values(&self) -> &[ScalarField] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [ScalarField] {
        &mut self.values
    }

    pub fn step(&self, k: usize) -> &ScalarField {
        &self.values[k]
    }

    pub fn ensure_compatible(&self, other: &Control) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.nt() != other.nt() || self.dt != other.dt {
            return Err(Error::GridMismatch(format!(
                "time meshes differ: {} steps of {} vs {} steps of {}",
                self.nt(),
                self.dt,
                other.nt(),
                other.dt
            )));
        }
        Ok(())
    }

    /// Discrete L²(Q) inner product `dt Σ_k ⟨a_k, b_k⟩`.
    pub fn dot(&self, other: &Control) -> f64 {
        self.dt
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.dot(b))
                .sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }

    pub fn map_steps(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Control {
        Self {
            grid: self.grid,
            dt: self.dt,
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Control {
        self.map_steps(|v| v.scaled(a))
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Control) {
        for (s, xv) in self.values.iter_mut().zip(&x.values) {
            s.axpy(a, xv);
        }
    }

    pub fn add(&self, other: &Control) -> Control {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Control) -> Control {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

/// The quadruple `(φ, μ, u, p)` at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub u: VectorField,
    pub p: ScalarField,
}

impl StateSnapshot {
    /// Completes `φ` with its chemical potential and the Darcy velocity and
    /// pressure for source `s`.
    pub fn from_phi(phi: ScalarField, s: &ScalarField, poisson_tol: f64) -> Result<Self> {
        let mu = chemical_potential(&phi);
        let (u, p) = darcy_solve(&phi, &mu, s, poisson_tol)?;
        let snap = Self { phi, mu, u, p };
        if snap.is_finite() {
            Ok(snap)
        } else {
            Err(Error::NonFinite)
        }
    }

    fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.mu.is_finite() && self.u.is_finite() && self.p.is_finite()
    }
}

/// The stored discrete trajectory, `nt + 1` snapshots at `t_k = k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Grid2D,
    dt: f64,
    snapshots: Vec<StateSnapshot>,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nt(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn snapshots(&self) -> &[StateSnapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, k: usize) -> &StateSnapshot {
        &self.snapshots[k]
    }

    pub fn phi(&self, k: usize) -> &ScalarField {
        &self.snapshots[k].phi
    }

    pub fn final_phi(&self) -> &ScalarField {
        &self.snapshots[self.nt()].phi
    }

    /// Checks that a control lives on this trajectory's space-time mesh.
    pub fn ensure_matches(&self, control: &Control) -> Result<()> {
        self.grid.ensure_same(control.grid())?;
        if control.nt() != self.nt() || control.dt() != self.dt {
            return Err(Error::GridMismatch(format!(
                "trajectory has {} steps of {}, control has {} steps of {}",
                self.nt(),
                self.dt,
                control.nt(),
                control.dt()
            )));
        }
        Ok(())
    }
}
