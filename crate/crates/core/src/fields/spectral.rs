//! Orthonormal cosine basis that diagonalizes the mirrored-ghost Laplacian.
//!
//! On a uniform cell-centered grid the vectors `cos(π k (i + ½) / n)` are
//! exact eigenvectors of the 1D Neumann second difference with eigenvalues
//! `-(4 / dx²) sin²(π k / 2n)`. Any polynomial in the 2D Laplacian is
//! therefore inverted exactly by a separable transform, which is used as the
//! conjugate-gradient preconditioner.

use super::Grid2D;
use std::f64::consts::PI;

pub(crate) struct CosineBasis {
    nx: usize,
    ny: usize,
    cx: Vec<f64>,
    cy: Vec<f64>,
    eig: Vec<f64>,
}

fn basis_1d(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    let w0 = (1.0 / n as f64).sqrt();
    let w = (2.0 / n as f64).sqrt();
    for k in 0..n {
        let wk = if k == 0 { w0 } else { w };
        for i in 0..n {
            c[k * n + i] = wk * (PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
    }
    c
}

fn eig_1d(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = (PI * k as f64 / (2.0 * n as f64)).sin();
            -4.0 * s * s / (h * h)
        })
        .collect()
}

impl CosineBasis {
    pub(crate) fn new(grid: &Grid2D) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let ex = eig_1d(nx, grid.dx());
        let ey = eig_1d(ny, grid.dy());
        let mut eig = vec![0.0; nx * ny];
        for ky in 0..ny {
            for kx in 0..nx {
                eig[ky * nx + kx] = ex[kx] + ey[ky];
            }
        }
        Self {
            nx,
            ny,
            cx: basis_1d(nx),
            cy: basis_1d(ny),
            eig,
        }
    }

    /// Laplacian eigenvalue of each mode, indexed like field values.
    pub(crate) fn eigenvalues(&self) -> &[f64] {
        &self.eig
    }

    fn forward(&self, v: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let mut tmp = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &v[j * nx..(j + 1) * nx];
            for k in 0..nx {
                let basis = &self.cx[k * nx..(k + 1) * nx];
                tmp[j * nx + k] = basis.iter().zip(row).map(|(a, b)| a * b).sum();
            }
        }
        let mut out = vec![0.0; nx * ny];
        for ky in 0..ny {
            let dst = &mut out[ky * nx..(ky + 1) * nx];
            for j in 0..ny {
                let c = self.cy[ky * ny + j];
                for (d, s) in dst.iter_mut().zip(&tmp[j * nx..(j + 1) * nx]) {
                    *d += c * s;
                }
            }
        }
        out
    }

    fn inverse(&self, coef: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let mut tmp = vec![0.0; nx * ny];
        for ky in 0..ny {
            let src = &coef[ky * nx..(ky + 1) * nx];
            for j in 0..ny {
                let c = self.cy[ky * ny + j];
                for (d, s) in tmp[j * nx..(j + 1) * nx].iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
        let mut out = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &tmp[j * nx..(j + 1) * nx];
            let dst = &mut out[j * nx..(j + 1) * nx];
            for (k, &a) in row.iter().enumerate() {
                let basis = &self.cx[k * nx..(k + 1) * nx];
                for (d, b) in dst.iter_mut().zip(basis) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Applies `g(Δ)` by scaling each mode by `g(λ)`.
    pub(crate) fn apply(&self, v: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut c = self.forward(v);
        for (ci, &lam) in c.iter_mut().zip(&self.eig) {
            *ci *= g(lam);
        }
        self.inverse(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{laplacian_neumann, ScalarField};
    use super::*;

    #[test]
    fn transform_round_trips() {
        let g = Grid2D::new(5, 7, 1.0, 2.0).unwrap();
        let b = CosineBasis::new(&g);
        let v: Vec<f64> = (0..35).map(|k| ((k * 37) % 11) as f64 - 4.5).collect();
        let back = b.apply(&v, |_| 1.0);
        for (a, c) in v.iter().zip(&back) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_stencil_laplacian() {
        let g = Grid2D::new(6, 8, 1.3, 0.9).unwrap();
        let b = CosineBasis::new(&g);
        let f = ScalarField::from_fn(g, |x, y| (2.0 * x).sin() * y + x * x);
        let spectral = b.apply(f.values(), |lam| lam);
        let stencil = laplacian_neumann(&f);
        for (a, c) in spectral.iter().zip(stencil.values()) {
            assert!((a - c).abs() < 1e-9 * (1.0 + c.abs()));
        }
    }
}
