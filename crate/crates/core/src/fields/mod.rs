//! Discrete geometry on a uniform cell-centered rectangular grid.
//!
//! Scalars live at cell centers. Vector fields are staggered: the x component
//! stored at cell `(i, j)` is the value on the face between cells `(i, j)` and
//! `(i + 1, j)`, i.e. at `x = (i + 1) dx`; likewise for y. The slot `i = nx - 1`
//! (resp. `j = ny - 1`) corresponds to the boundary face, where the normal
//! component of every field produced here vanishes. With this layout the
//! divergence is exactly the negative transpose of the gradient in the
//! discrete inner product `dx dy Σ f g`.
//!
//! All arrays are row-major by y then x: index `j * nx + i`.

mod csv;
mod ops;
mod solve;
mod spectral;

pub use csv::{read_field, write_field, FieldCsvError};
pub use ops::{
    divergence, face_average, face_average_transpose, gradient, laplacian_neumann,
};
pub use solve::{
    apply_implicit_operator, compatibility_tolerance, solve_ch_implicit, solve_poisson_neumann,
    DEFAULT_TOL,
};

use crate::error::{Error, Result};

/// Uniform cell-centered grid on `[0, lx] × [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid2D {
    pub const MIN_CELLS: usize = 4;

    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < Self::MIN_CELLS || ny < Self::MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {} cells per direction, got {nx}x{ny}",
                Self::MIN_CELLS
            )));
        }
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain lengths must be positive, got lx={lx}, ly={ly}"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// `n × n` grid on the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    /// Discrete measure of the domain, `nx ny dx dy`.
    pub fn area(&self) -> f64 {
        (self.nx * self.ny) as f64 * self.cell_area()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy())
    }

    /// x coordinate of the x-face stored in column `i`.
    pub fn x_face(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.dx()
    }

    /// y coordinate of the y-face stored in row `j`.
    pub fn y_face(&self, j: usize) -> f64 {
        (j as f64 + 1.0) * self.dy()
    }

    pub(crate) fn ensure_same(&self, other: &Grid2D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} on [{}, {}] vs {}x{} on [{}, {}]",
                self.nx, self.ny, self.lx, self.ly, other.nx, other.ny, other.lx, other.ly
            )))
        }
    }
}

/// A cell-centered scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                len: values.len(),
                expected: grid.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `dx dy Σ values`, summed in storage order.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn mean(&self) -> f64 {
        self.integrate() / self.grid.area()
    }

    /// Discrete L² inner product `dx dy Σ f g`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        dot_raw(&self.values, &other.values) * self.grid.cell_area()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        Self::from_vec(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        Self::from_vec(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        self.map(|v| a * v)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        debug_assert_eq!(self.grid, x.grid);
        for (s, &xv) in self.values.iter_mut().zip(&x.values) {
            *s += a * xv;
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a * b)
    }

    /// Subtracts the mean, leaving a field with zero integral.
    pub fn remove_mean(&mut self) {
        let m = self.values.iter().sum::<f64>() / self.values.len() as f64;
        for v in &mut self.values {
            *v -= m;
        }
    }
}

/// A face-staggered vector field; see the module docs for the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    x: ScalarField,
    y: ScalarField,
}

impl VectorField {
    pub fn new(x: ScalarField, y: ScalarField) -> Result<Self> {
        x.grid.ensure_same(&y.grid)?;
        Ok(Self { x, y })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.x.grid
    }

    pub fn x_component(&self) -> &ScalarField {
        &self.x
    }

    pub fn y_component(&self) -> &ScalarField {
        &self.y
    }

    pub fn into_components(self) -> (ScalarField, ScalarField) {
        (self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Discrete inner product over both face families.
    pub fn dot(&self, other: &VectorField) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }

    pub fn scaled(&self, a: f64) -> VectorField {
        Self {
            x: self.x.scaled(a),
            y: self.y.scaled(a),
        }
    }

    pub fn axpy(&mut self, a: f64, v: &VectorField) {
        self.x.axpy(a, &v.x);
        self.y.axpy(a, &v.y);
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        Self {
            x: self.x.add(&other.x),
            y: self.y.add(&other.y),
        }
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        Self {
            x: self.x.sub(&other.x),
            y: self.y.sub(&other.y),
        }
    }

    /// Face-wise product with another face field.
    pub fn mul(&self, other: &VectorField) -> VectorField {
        Self {
            x: self.x.mul(&other.x),
            y: self.y.mul(&other.y),
        }
    }
}

/// Integral of a field; see [`ScalarField::integrate`].
pub fn integrate(f: &ScalarField) -> f64 {
    f.integrate()
}

pub(crate) fn dot_raw(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
