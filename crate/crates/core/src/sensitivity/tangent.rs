use super::f_double_prime;
use crate::control::CostSpec;
use crate::error::Result;
use crate::fields::{
    divergence, face_average, gradient, laplacian_neumann, solve_ch_implicit,
    solve_poisson_neumann, ScalarField, VectorField,
};
use crate::state::{Control, Scheme, StateSnapshot, Trajectory};

/// Linearized quadruple `(ξ, η, v, q)` at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSnapshot {
    pub xi: ScalarField,
    pub eta: ScalarField,
    pub v: VectorField,
    /// Mean-zero linearized pressure.
    pub q: ScalarField,
}

/// Completes `ξ` with `η = -Δξ + f''(φ*)ξ` and the linearized Darcy pair
/// `-Δq = -div(η∇φ* + μ*∇ξ)`, `v = -∇q + η∇φ* + μ*∇ξ`.
fn complete(xi: ScalarField, base: &StateSnapshot, tol: f64) -> Result<TangentSnapshot> {
    let mut eta = xi.mul(&f_double_prime(&base.phi));
    eta.axpy(-1.0, &laplacian_neumann(&xi));
    let flux = face_average(&eta)
        .mul(&gradient(&base.phi))
        .add(&face_average(&base.mu).mul(&gradient(&xi)));
    let q = solve_poisson_neumann(&divergence(&flux).scaled(-1.0), tol)?;
    let mut v = flux;
    v.axpy(-1.0, &gradient(&q));
    Ok(TangentSnapshot { xi, eta, v, q })
}

fn advance(
    snap: &TangentSnapshot,
    base: &StateSnapshot,
    h: &ScalarField,
    dt: f64,
    scheme: &Scheme,
) -> Result<ScalarField> {
    let xi = &snap.xi;
    let mut explicit = laplacian_neumann(&xi.mul(&f_double_prime(&base.phi)));
    explicit.axpy(-scheme.stab, &laplacian_neumann(xi));
    // δ div(φu) = div(ξ u*) + div(φ* v)
    let convection = face_average(xi)
        .mul(&base.u)
        .add(&face_average(&base.phi).mul(&snap.v));
    explicit.axpy(-1.0, &divergence(&convection));
    explicit.axpy(1.0, h);
    let mut rhs = xi.clone();
    rhs.axpy(dt, &explicit);
    solve_ch_implicit(&rhs, dt, scheme.stab, scheme.implicit_tol)
}

/// Propagates a control perturbation `h` along `base`; returns `nt + 1`
/// snapshots starting from `ξ⁰ = 0`.
pub fn solve_tangent(
    base: &Trajectory,
    h: &Control,
    scheme: &Scheme,
) -> Result<Vec<TangentSnapshot>> {
    base.ensure_matches(h)?;
    let tol = scheme.poisson_tol;
    let mut out = Vec::with_capacity(base.nt() + 1);
    out.push(complete(ScalarField::zeros(*base.grid()), base.snapshot(0), tol)?);
    for k in 0..base.nt() {
        let next = advance(&out[k], base.snapshot(k), h.step(k), base.dt(), scheme)
            .and_then(|xi| complete(xi, base.snapshot(k + 1), tol))
            .map_err(|e| e.at_step(k + 1))?;
        out.push(next);
    }
    Ok(out)
}

/// `β₁⟨φ(T) - φ_Ω, ξ(T)⟩ + β₂ dt Σ_{k≥1} ⟨φᵏ - φ_Q(t_k), ξᵏ⟩`, the derivative
/// of the tracking terms of the cost in the direction whose tangent is given.
pub fn observation_pairing(
    base: &Trajectory,
    spec: &CostSpec,
    tangent: &[TangentSnapshot],
) -> Result<f64> {
    base.grid().ensure_same(spec.phi_omega.grid())?;
    let nt = base.nt();
    let terminal = base.final_phi().sub(&spec.phi_omega);
    let mut total = spec.beta1 * terminal.dot(&tangent[nt].xi);
    if spec.beta2 != 0.0 {
        let tracking: f64 = (1..=nt)
            .map(|k| {
                base.phi(k)
                    .sub(&spec.phi_q.at(base.time(k)))
                    .dot(&tangent[k].xi)
            })
            .sum();
        total += spec.beta2 * base.dt() * tracking;
    }
    Ok(total)
}
