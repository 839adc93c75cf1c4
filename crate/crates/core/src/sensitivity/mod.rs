//! Tangent and adjoint sensitivities of the forward scheme.
//!
//! Both are derived from the implemented time step rather than discretized
//! independently: the tangent step is the exact Jacobian of
//! [`advance_phase`](crate::state::advance_phase) and the adjoint step is its
//! exact transpose in the discrete inner products. The duality identity
//! `⟨p₁, h⟩_Q = β₁⟨φ(T) - φ_Ω, ξ(T)⟩ + β₂⟨φ - φ_Q, ξ⟩_Q` therefore holds up to
//! round-off and elliptic tolerances.

mod adjoint;
mod tangent;

pub use adjoint::{adjoint_pairing, solve_adjoint, AdjointSnapshot};
pub use tangent::{observation_pairing, solve_tangent, TangentSnapshot};

use crate::fields::ScalarField;

/// `f''(φ) = 3φ² - 1`, pointwise.
pub fn f_double_prime(phi: &ScalarField) -> ScalarField {
    phi.map(|p| 3.0 * p * p - 1.0)
}
