//! Uniform cell-centred grids on a rectangle and the discrete operators the
//! solver is built from.
//!
//! Every operator treats the outer boundary as a zero-flux wall: the ghost
//! value outside a boundary cell mirrors the cell itself, so boundary faces
//! carry no diffusive or chemotactic flux. All operators are written in face
//! form, which makes the discrete divergence theorem hold up to round-off.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// Geometry of an `nx` by `ny` cell-centred grid covering `[0, lx] x [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl GridSpec {
    pub const MIN_CELLS: usize = 4;

    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < Self::MIN_CELLS || ny < Self::MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {} cells per axis, got {nx} x {ny}",
                Self::MIN_CELLS
            )));
        }
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain lengths must be positive and finite, got {lx} x {ly}"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Square grid on the unit square.
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

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// |Omega|.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index of cell `(i, j)`; `i` runs along x.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Inverse of [`GridSpec::index`].
    #[inline]
    pub fn cell(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }
}

/// One scalar unknown sampled at the cell centres of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                len: values.len(),
                expected: grid.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every cell centre.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Field) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// First non-finite cell, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize, f64)> {
        self.values
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| {
                let (i, j) = self.grid.cell(k);
                (i, j, self.values[k])
            })
    }

    pub fn check_finite(&self, name: &'static str) -> Result<()> {
        match self.first_non_finite() {
            None => Ok(()),
            Some((i, j, value)) => Err(Error::NonFinite {
                field: name,
                i,
                j,
                value,
            }),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Sup norm. NaN entries propagate.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, &v| {
            if v.is_nan() || acc.is_nan() {
                f64::NAN
            } else {
                acc.max(v.abs())
            }
        })
    }

    /// Location and value of the largest entry; NaN counts as largest.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            let b = self.values[best];
            if v.is_nan() {
                best = k;
                break;
            }
            if v > b {
                best = k;
            }
        }
        let (i, j) = self.grid.cell(best);
        (i, j, self.values[best])
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Euclidean norm of the raw cell values.
    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// How the chemotactic flux picks the density on a face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceAveraging {
    /// Mean of the two adjacent cells. Second order.
    #[default]
    Arithmetic,
    /// Density of the cell the flux leaves. Keeps the explicit step
    /// positivity preserving under a CFL restriction.
    Upwind,
}

/// 5-point Laplacian with mirrored ghost cells.
pub fn laplacian(f: &Field) -> Result<Field> {
    f.check_finite("input")?;
    let g = *f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let cx = 1.0 / (g.hx() * g.hx());
    let cy = 1.0 / (g.hy() * g.hy());
    let v = f.values();
    let mut out = vec![0.0; g.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = g.index(i, j);
            let c = v[k];
            let west = if i > 0 { v[k - 1] } else { c };
            let east = if i + 1 < nx { v[k + 1] } else { c };
            let south = if j > 0 { v[k - nx] } else { c };
            let north = if j + 1 < ny { v[k + nx] } else { c };
            // (a + b) is commutative in IEEE arithmetic, so the stencil is
            // exactly invariant under reflections of the grid.
            out[k] = ((west + east) - 2.0 * c) * cx + ((south + north) - 2.0 * c) * cy;
        }
    }
    Field::new(g, out)
}

#[inline]
fn face_density(averaging: FaceAveraging, d_lo: f64, d_hi: f64, dp: f64) -> f64 {
    match averaging {
        FaceAveraging::Arithmetic => 0.5 * (d_lo + d_hi),
        FaceAveraging::Upwind => {
            if dp >= 0.0 {
                d_lo
            } else {
                d_hi
            }
        }
    }
}

/// Discrete `div(density * grad(potential))` with arithmetic face averaging.
pub fn chemotactic_divergence(density: &Field, potential: &Field) -> Result<Field> {
    chemotactic_divergence_with(density, potential, FaceAveraging::Arithmetic)
}

/// Discrete `div(density * grad(potential))` in conservative flux form.
///
/// The flux through the face between cells `lo` and `hi` (ordered along the
/// axis) is `rho_face * (p_hi - p_lo) / h`; boundary faces carry zero flux.
pub fn chemotactic_divergence_with(
    density: &Field,
    potential: &Field,
    averaging: FaceAveraging,
) -> Result<Field> {
    density.same_grid(potential)?;
    let g = *density.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let d = density.values();
    let p = potential.values();
    let mut out = vec![0.0; g.len()];

    for j in 0..ny {
        for i in 0..nx - 1 {
            let lo = g.index(i, j);
            let hi = lo + 1;
            let dp = p[hi] - p[lo];
            let flux = face_density(averaging, d[lo], d[hi], dp) * dp / hx;
            out[lo] += flux / hx;
            out[hi] -= flux / hx;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let lo = g.index(i, j);
            let hi = lo + nx;
            let dp = p[hi] - p[lo];
            let flux = face_density(averaging, d[lo], d[hi], dp) * dp / hy;
            out[lo] += flux / hy;
            out[hi] -= flux / hy;
        }
    }
    Field::new(g, out)
}

/// Midpoint quadrature.
pub fn integrate(f: &Field) -> f64 {
    f.grid().cell_area() * f.sum()
}

/// Face-based approximation of the integral of `|grad f|^2`. Each interior
/// face carries the weight `hx * hy`.
pub fn gradient_sq_integral(f: &Field) -> f64 {
    face_sum(f, |_, _| 1.0)
}

/// Face-based approximation of the integral of `|grad f|^2 / (f + e)`, with
/// the weight evaluated at the face average of `f`.
pub fn weighted_gradient_sq_integral(f: &Field) -> Result<f64> {
    let g = f.grid();
    // The face weight is positive iff every face average exceeds -e; checking
    // the cell values is equivalent for a face average of two cells only when
    // both are > -e, so test the faces directly.
    let v = f.values();
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let k = g.index(i, j);
            let neighbours = [
                (i + 1 < g.nx()).then(|| k + 1),
                (j + 1 < g.ny()).then(|| k + g.nx()),
            ];
            for nb in neighbours.into_iter().flatten() {
                let avg = 0.5 * (v[k] + v[nb]);
                if !(avg + E > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "face weight f + e = {} is not positive next to cell ({i}, {j})",
                        avg + E
                    )));
                }
            }
        }
    }
    Ok(face_sum(f, |a, b| 1.0 / (0.5 * (a + b) + E)))
}

fn face_sum(f: &Field, weight: impl Fn(f64, f64) -> f64) -> f64 {
    let g = f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let v = f.values();
    let mut acc = 0.0;
    for j in 0..ny {
        for i in 0..nx - 1 {
            let k = g.index(i, j);
            let d = (v[k + 1] - v[k]) / hx;
            acc += d * d * weight(v[k], v[k + 1]);
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let k = g.index(i, j);
            let d = (v[k + nx] - v[k]) / hy;
            acc += d * d * weight(v[k], v[k + nx]);
        }
    }
    acc * hx * hy
}

/// Largest face gradients `(max |df/dx|, max |df/dy|)` over interior faces.
pub fn max_face_gradients(f: &Field) -> (f64, f64) {
    let g = f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let v = f.values();
    let mut gx = 0.0_f64;
    let mut gy = 0.0_f64;
    for j in 0..ny {
        for i in 0..nx {
            let k = g.index(i, j);
            if i + 1 < nx {
                gx = gx.max((v[k + 1] - v[k]).abs());
            }
            if j + 1 < ny {
                gy = gy.max((v[k + nx] - v[k]).abs());
            }
        }
    }
    (gx / g.hx(), gy / g.hy())
}
