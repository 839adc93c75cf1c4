use super::f_double_prime;
use crate::control::CostSpec;
use crate::error::Result;
use crate::fields::{
    divergence, face_average, face_average_transpose, gradient, laplacian_neumann,
    solve_ch_implicit, solve_poisson_neumann, ScalarField, VectorField,
};
use crate::state::{Control, Scheme, StateSnapshot, Trajectory};

/// Adjoint quadruple on one control interval `(t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSnapshot {
    /// Pairs with the control: the reduced gradient is `p₁ + β₃ R`.
    pub p1: ScalarField,
    /// `Δp₁ + p₃·∇φ*`.
    pub p2: ScalarField,
    /// `∇p₄ - p₁∇φ*`, divergence free.
    pub p3: VectorField,
    /// Mean-zero solution of `Δp₄ = div(p₁∇φ*)`.
    pub p4: ScalarField,
}

/// Transposed step. Given the costate `λᵏ⁺¹` that multiplies `φᵏ⁺¹`, returns
/// the adjoint quadruple of interval `k` and `λᵏ` before the tracking load at
/// `t_k` is added.
fn retreat(
    lambda_next: &ScalarField,
    base: &StateSnapshot,
    dt: f64,
    scheme: &Scheme,
) -> Result<(AdjointSnapshot, ScalarField)> {
    // The implicit operator is symmetric, so its transpose solve is the same.
    let p1 = solve_ch_implicit(lambda_next, dt, scheme.stab, scheme.implicit_tol)?;
    let grad_phi = gradient(&base.phi);
    let p1_grad_phi = face_average(&p1).mul(&grad_phi);
    let p4 = solve_poisson_neumann(&divergence(&p1_grad_phi).scaled(-1.0), scheme.poisson_tol)?;
    let mut p3 = gradient(&p4);
    p3.axpy(-1.0, &p1_grad_phi);

    let lap_p1 = laplacian_neumann(&p1);
    let p3_dot_grad_phi = face_average_transpose(&p3.mul(&grad_phi));
    let p2 = lap_p1.add(&p3_dot_grad_phi);

    let mut incr = f_double_prime(&base.phi).mul(&p2);
    incr.axpy(-1.0, &laplacian_neumann(&p3_dot_grad_phi));
    incr.axpy(-scheme.stab, &lap_p1);
    incr.axpy(1.0, &face_average_transpose(&base.u.mul(&gradient(&p1))));
    incr.axpy(-1.0, &divergence(&face_average(&base.mu).mul(&p3)));
    let mut lambda = p1.clone();
    lambda.axpy(dt, &incr);
    Ok((AdjointSnapshot { p1, p2, p3, p4 }, lambda))
}

/// Backward sweep for the adjoint of the discrete state equations; returns
/// one snapshot per control interval, in forward time order.
pub fn solve_adjoint(
    base: &Trajectory,
    spec: &CostSpec,
    scheme: &Scheme,
) -> Result<Vec<AdjointSnapshot>> {
    base.grid().ensure_same(spec.phi_omega.grid())?;
    let nt = base.nt();
    let dt = base.dt();
    let tracking_load = |k: usize| {
        base.phi(k)
            .sub(&spec.phi_q.at(base.time(k)))
            .scaled(spec.beta2 * dt)
    };
    let mut lambda = base.final_phi().sub(&spec.phi_omega).scaled(spec.beta1);
    if spec.beta2 != 0.0 {
        lambda.axpy(1.0, &tracking_load(nt));
    }
    let mut out = Vec::with_capacity(nt);
    for k in (0..nt).rev() {
        let (snap, mut prev) =
            retreat(&lambda, base.snapshot(k), dt, scheme).map_err(|e| e.at_step(k))?;
        if k > 0 && spec.beta2 != 0.0 {
            prev.axpy(1.0, &tracking_load(k));
        }
        out.push(snap);
        lambda = prev;
    }
    out.reverse();
    Ok(out)
}

/// `⟨p₁, h⟩_Q = dt Σ_k ⟨p₁ᵏ, hᵏ⟩`.
pub fn adjoint_pairing(adjoint: &[AdjointSnapshot], h: &Control) -> f64 {
    h.dt()
        * adjoint
            .iter()
            .zip(h.values())
            .map(|(a, hk)| a.p1.dot(hk))
            .sum::<f64>()
}
