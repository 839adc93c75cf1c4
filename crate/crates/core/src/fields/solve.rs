//! Matrix-free preconditioned conjugate gradients for the two symmetric
//! elliptic problems of the scheme: the Neumann Poisson problem and the
//! implicit Cahn–Hilliard step operator `I + dt Δ² - dt stab Δ`.

use super::ops::laplacian_into;
use super::spectral::CosineBasis;
use super::{dot_raw, Grid2D, ScalarField};
use crate::error::{Error, Result};

/// Default absolute residual tolerance (discrete L² norm).
pub const DEFAULT_TOL: f64 = 1e-10;

/// Admissible `|mean(rhs)|` for a Neumann Poisson right-hand side.
pub fn compatibility_tolerance(rhs: &ScalarField) -> f64 {
    1e-8 * (1.0 + rhs.max_abs())
}

/// Solves `-Δp = rhs - mean(rhs)` with homogeneous Neumann conditions and
/// returns the mean-zero solution.
pub fn solve_poisson_neumann(rhs: &ScalarField, tol: f64) -> Result<ScalarField> {
    check_tol(tol)?;
    let mean = rhs.mean();
    let tolerance = compatibility_tolerance(rhs);
    if mean.abs() > tolerance {
        return Err(Error::CompatibilityViolation { mean, tolerance });
    }
    let grid = *rhs.grid();
    let mut b = rhs.clone();
    b.remove_mean();
    let basis = CosineBasis::new(&grid);
    let op_norm = basis
        .eigenvalues()
        .iter()
        .fold(0.0f64, |m, l| m.max(l.abs()));
    let x = pcg(
        &grid,
        b.values(),
        |v| {
            let mut out = vec![0.0; v.len()];
            laplacian_into(&grid, v, &mut out);
            out.iter_mut().for_each(|o| *o = -*o);
            out
        },
        |r| basis.apply(r, |lam| if lam == 0.0 { 0.0 } else { -1.0 / lam }),
        Settings {
            tol,
            max_iter: 10 * grid.len(),
            project_mean: true,
            op_norm,
        },
    )?;
    let mut p = ScalarField::from_vec(grid, x);
    p.remove_mean();
    Ok(p)
}

/// Applies `(I + dt Δ² - dt stab Δ)` with mirrored ghosts on both `φ` and `Δφ`.
pub fn apply_implicit_operator(phi: &ScalarField, dt: f64, stab: f64) -> ScalarField {
    let grid = *phi.grid();
    ScalarField::from_vec(grid, implicit_apply(&grid, phi.values(), dt, stab))
}

fn implicit_apply(grid: &Grid2D, v: &[f64], dt: f64, stab: f64) -> Vec<f64> {
    let mut lap = vec![0.0; v.len()];
    laplacian_into(grid, v, &mut lap);
    let mut bilap = vec![0.0; v.len()];
    laplacian_into(grid, &lap, &mut bilap);
    v.iter()
        .zip(lap.iter().zip(&bilap))
        .map(|(&x, (&l, &b))| x + dt * b - dt * stab * l)
        .collect()
}

/// Solves `(I + dt Δ² - dt stab Δ) φ = rhs`. The operator is symmetric
/// positive definite for `dt > 0`, `stab ≥ 0`.
pub fn solve_ch_implicit(rhs: &ScalarField, dt: f64, stab: f64, tol: f64) -> Result<ScalarField> {
    check_tol(tol)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(stab.is_finite() && stab >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "stabilization must be nonnegative, got {stab}"
        )));
    }
    let grid = *rhs.grid();
    let basis = CosineBasis::new(&grid);
    let symbol = |lam: f64| 1.0 + dt * lam * lam - dt * stab * lam;
    let op_norm = basis
        .eigenvalues()
        .iter()
        .fold(0.0f64, |m, &l| m.max(symbol(l)));
    let x = pcg(
        &grid,
        rhs.values(),
        |v| implicit_apply(&grid, v, dt, stab),
        |r| basis.apply(r, |lam| 1.0 / symbol(lam)),
        Settings {
            tol,
            max_iter: 10 * grid.len(),
            project_mean: false,
            op_norm,
        },
    )?;
    Ok(ScalarField::from_vec(grid, x))
}

fn check_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")))
    }
}

struct Settings {
    tol: f64,
    max_iter: usize,
    project_mean: bool,
    /// Spectral radius of the operator; sets the round-off floor.
    op_norm: f64,
}

fn project(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Preconditioned CG. Convergence is declared on the true residual once it
/// reaches `max(tol, floor)`, where `floor` is the attainable accuracy in
/// double precision for the given operator and solution size.
fn pcg(
    grid: &Grid2D,
    b: &[f64],
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    s: Settings,
) -> Result<Vec<f64>> {
    let area = grid.cell_area();
    let norm = |v: &[f64]| (dot_raw(v, v) * area).sqrt();
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm <= s.tol {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = vec![0.0; n];
    let mut rz_old = 0.0;
    let mut restart = true;
    let mut residual = b_norm;
    for _ in 0..s.max_iter {
        let mut z = precond(&r);
        if s.project_mean {
            project(&mut z);
        }
        let rz = dot_raw(&r, &z);
        if restart {
            p.copy_from_slice(&z);
            restart = false;
        } else {
            let beta = rz / rz_old;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        rz_old = rz;
        let ap = apply(&p);
        let pap = dot_raw(&p, &ap);
        if !(pap > 0.0) || !rz.is_finite() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if s.project_mean {
            project(&mut r);
        }
        let floor = 16.0 * f64::EPSILON * (b_norm + s.op_norm * norm(&x));
        let threshold = s.tol.max(floor);
        if norm(&r) <= threshold {
            let ax = apply(&x);
            let mut true_r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            if s.project_mean {
                project(&mut true_r);
            }
            residual = norm(&true_r);
            if residual <= threshold {
                return Ok(x);
            }
            r = true_r;
            restart = true;
        }
    }
    Err(Error::NoConvergence {
        iterations: s.max_iter,
        residual,
    })
}
