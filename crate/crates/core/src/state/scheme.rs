use super::{Control, Scheme, SourceSpec, StateSnapshot, Trajectory};
use crate::error::{Error, Result};
use crate::fields::{
    divergence, face_average, gradient, laplacian_neumann, solve_ch_implicit,
    solve_poisson_neumann, ScalarField, VectorField,
};

/// Double-well potential `f(φ) = φ⁴/4 - φ²/2`.
pub fn double_well(phi: f64) -> f64 {
    let p2 = phi * phi;
    0.25 * p2 * p2 - 0.5 * p2
}

/// `f'(φ) = φ³ - φ`, pointwise.
pub fn f_prime(phi: &ScalarField) -> ScalarField {
    phi.map(|p| p * p * p - p)
}

/// `μ = -Δφ + f'(φ)`.
pub fn chemical_potential(phi: &ScalarField) -> ScalarField {
    let mut mu = f_prime(phi);
    mu.axpy(-1.0, &laplacian_neumann(phi));
    mu
}

/// Darcy velocity and mean-zero pressure:
/// `-Δp = s - div(μ∇φ)`, `u = -∇p + μ∇φ`, with `μ` averaged onto faces.
pub fn darcy_solve(
    phi: &ScalarField,
    mu: &ScalarField,
    s: &ScalarField,
    tol: f64,
) -> Result<(VectorField, ScalarField)> {
    phi.grid().ensure_same(mu.grid())?;
    phi.grid().ensure_same(s.grid())?;
    let korteweg = face_average(mu).mul(&gradient(phi));
    let rhs = s.sub(&divergence(&korteweg));
    let p = solve_poisson_neumann(&rhs, tol)?;
    let mut u = korteweg;
    u.axpy(-1.0, &gradient(&p));
    Ok((u, p))
}

/// `‖div u - (s - mean s)‖`, the discrete residual of the incompressibility
/// constraint.
pub fn div_u_residual(u: &VectorField, s: &ScalarField) -> f64 {
    let mut target = s.clone();
    target.remove_mean();
    divergence(u).sub(&target).norm()
}

/// Advances `φⁿ` by one step using the lagged `μⁿ`, `uⁿ` stored in `prev`.
///
/// Solves `(I + dt Δ² - dt stab Δ) φⁿ⁺¹ = φⁿ + dt [Δf'(φⁿ) - stab Δφⁿ -
/// div(φⁿ uⁿ) + sⁿ + rⁿ]`. The mean of `sⁿ` is removed so that only the
/// control changes the total mass.
pub fn advance_phase(
    prev: &StateSnapshot,
    s_n: &ScalarField,
    r_n: &ScalarField,
    dt: f64,
    scheme: &Scheme,
) -> Result<ScalarField> {
    let phi = &prev.phi;
    phi.grid().ensure_same(r_n.grid())?;
    phi.grid().ensure_same(s_n.grid())?;
    let mut explicit = laplacian_neumann(&f_prime(phi));
    explicit.axpy(-scheme.stab, &laplacian_neumann(phi));
    explicit.axpy(-1.0, &divergence(&face_average(phi).mul(&prev.u)));
    let mut s = s_n.clone();
    s.remove_mean();
    explicit.axpy(1.0, &s);
    explicit.axpy(1.0, r_n);
    let mut rhs = phi.clone();
    rhs.axpy(dt, &explicit);
    let next = solve_ch_implicit(&rhs, dt, scheme.stab, scheme.implicit_tol)?;
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite)
    }
}

/// One full step from `φⁿ`: builds the snapshot at tⁿ with source `s_n`,
/// advances, and completes the snapshot at tⁿ⁺¹ with source `s_next`.
pub fn step_state(
    phi_n: &ScalarField,
    s_n: &ScalarField,
    s_next: &ScalarField,
    r_n: &ScalarField,
    dt: f64,
    scheme: &Scheme,
) -> Result<StateSnapshot> {
    let prev = StateSnapshot::from_phi(phi_n.clone(), s_n, scheme.poisson_tol)?;
    let next = advance_phase(&prev, s_n, r_n, dt, scheme)?;
    StateSnapshot::from_phi(next, s_next, scheme.poisson_tol)
}

/// Integrates the state system over the control's time mesh.
pub fn solve_state(
    phi0: &ScalarField,
    source: &SourceSpec,
    control: &Control,
    scheme: &Scheme,
) -> Result<Trajectory> {
    scheme.validate()?;
    let grid = *control.grid();
    grid.ensure_same(phi0.grid())?;
    if !phi0.is_finite() {
        return Err(Error::NonFinite.at_step(0));
    }
    let dt = control.dt();
    let mut snapshots = Vec::with_capacity(control.nt() + 1);
    let first = StateSnapshot::from_phi(phi0.clone(), &source.at(0.0), scheme.poisson_tol)
        .map_err(|e| e.at_step(0))?;
    snapshots.push(first);
    let mut s_n = source.at(0.0);
    for k in 0..control.nt() {
        let s_next = source.at((k + 1) as f64 * dt);
        let prev = &snapshots[k];
        let snap = advance_phase(prev, &s_n, control.step(k), dt, scheme)
            .and_then(|phi| StateSnapshot::from_phi(phi, &s_next, scheme.poisson_tol))
            .map_err(|e| e.at_step(k + 1))?;
        snapshots.push(snap);
        s_n = s_next;
    }
    Ok(Trajectory {
        grid,
        dt,
        snapshots,
    })
}

/// Total mass `∫ φ`.
pub fn mass(phi: &ScalarField) -> f64 {
    phi.integrate()
}

/// Adhesion energy `∫ ½|∇φ|² + f(φ)`, with the gradient term summed over
/// faces.
pub fn energy(phi: &ScalarField) -> f64 {
    let g = gradient(phi);
    0.5 * g.dot(&g) + phi.map(double_well).integrate()
}

/// `max_k (‖f_k‖² + ‖∇f_k‖²)^½`, the discrete C⁰([0,T]; H¹) norm of a
/// sequence of snapshots.
pub fn c0h1_norm(fields: &[ScalarField]) -> f64 {
    fields
        .iter()
        .map(|f| {
            let g = gradient(f);
            (f.dot(f) + g.dot(&g)).sqrt()
        })
        .fold(0.0, f64::max)
}
