use super::{ScalarField, VectorField};

/// Face-normal differences. Boundary slots are zero, which is the mirrored
/// ghost condition `∂_n f = 0`.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = *f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (idx, idy) = (1.0 / g.dx(), 1.0 / g.dy());
    let v = f.values();
    let mut gx = vec![0.0; g.len()];
    let mut gy = vec![0.0; g.len()];
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx - 1 {
            gx[row + i] = (v[row + i + 1] - v[row + i]) * idx;
        }
    }
    for j in 0..ny - 1 {
        let row = j * nx;
        for i in 0..nx {
            gy[row + i] = (v[row + nx + i] - v[row + i]) * idy;
        }
    }
    VectorField {
        x: ScalarField::from_vec(g, gx),
        y: ScalarField::from_vec(g, gy),
    }
}

/// Negative transpose of [`gradient`]. Boundary slots of `v` are ignored
/// (zero flux through the boundary), so the result always integrates to zero.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = *v.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (idx, idy) = (1.0 / g.dx(), 1.0 / g.dy());
    let vx = v.x.values();
    let vy = v.y.values();
    let mut out = vec![0.0; g.len()];
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let east = if i + 1 < nx { vx[k] } else { 0.0 };
            let west = if i > 0 { vx[k - 1] } else { 0.0 };
            let north = if j + 1 < ny { vy[k] } else { 0.0 };
            let south = if j > 0 { vy[k - nx] } else { 0.0 };
            out[k] = (east - west) * idx + (north - south) * idy;
        }
    }
    ScalarField::from_vec(g, out)
}

/// Five-point Laplacian with mirrored ghosts; identical to
/// `divergence(gradient(f))`.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let mut out = vec![0.0; g.len()];
    laplacian_into(&g, f.values(), &mut out);
    ScalarField::from_vec(g, out)
}

pub(crate) fn laplacian_into(g: &super::Grid2D, v: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let idx2 = 1.0 / (g.dx() * g.dx());
    let idy2 = 1.0 / (g.dy() * g.dy());
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let c = v[k];
            let east = if i + 1 < nx { v[k + 1] } else { c };
            let west = if i > 0 { v[k - 1] } else { c };
            let north = if j + 1 < ny { v[k + nx] } else { c };
            let south = if j > 0 { v[k - nx] } else { c };
            out[k] = (east - 2.0 * c + west) * idx2 + (north - 2.0 * c + south) * idy2;
        }
    }
}

/// Arithmetic mean of the two cells adjacent to each interior face; zero on
/// boundary slots.
///
/// Satisfies the exact product rule
/// `face_average(a) ∘ gradient(b) + face_average(b) ∘ gradient(a) = gradient(a b)`.
pub fn face_average(f: &ScalarField) -> VectorField {
    let g = *f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let v = f.values();
    let mut ax = vec![0.0; g.len()];
    let mut ay = vec![0.0; g.len()];
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx - 1 {
            ax[row + i] = 0.5 * (v[row + i] + v[row + i + 1]);
        }
    }
    for j in 0..ny - 1 {
        let row = j * nx;
        for i in 0..nx {
            ay[row + i] = 0.5 * (v[row + i] + v[row + nx + i]);
        }
    }
    VectorField {
        x: ScalarField::from_vec(g, ax),
        y: ScalarField::from_vec(g, ay),
    }
}

/// Transpose of [`face_average`] in the discrete inner products.
pub fn face_average_transpose(v: &VectorField) -> ScalarField {
    let g = *v.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let vx = v.x.values();
    let vy = v.y.values();
    let mut out = vec![0.0; g.len()];
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let east = if i + 1 < nx { vx[k] } else { 0.0 };
            let west = if i > 0 { vx[k - 1] } else { 0.0 };
            let north = if j + 1 < ny { vy[k] } else { 0.0 };
            let south = if j > 0 { vy[k - nx] } else { 0.0 };
            out[k] = 0.5 * (east + west + north + south);
        }
    }
    ScalarField::from_vec(g, out)
}
