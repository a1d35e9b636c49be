//! Uniform cell-centered box grids with zero-flux (mirror) boundary closure.
//!
//! Cells are stored with axis 0 varying fastest. Every discrete operator in
//! this module is written in terms of interior faces: a face joins two
//! neighbouring cells along one axis, and boundary faces carry no flux.

use std::ops::{Index, IndexMut};
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    control_mask: Vec<bool>,
    strides: Vec<usize>,
}

/// An interior face between `lo` and `hi = lo + stride(axis)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub lo: usize,
    pub hi: usize,
}

fn strides_for(dims: &[usize]) -> Vec<usize> {
    let mut strides = Vec::with_capacity(dims.len());
    let mut acc = 1;
    for &n in dims {
        strides.push(acc);
        acc *= n;
    }
    strides
}

impl Grid {
    /// Grid with the given cell counts and spacings; the control mask covers
    /// the whole domain.
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>) -> Result<Self> {
        let cells = dims.iter().product::<usize>();
        Self::with_mask(dims, spacing, vec![true; cells])
    }

    pub fn with_mask(dims: Vec<usize>, spacing: Vec<f64>, control_mask: Vec<bool>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::Structural(format!(
                "grid dimension must be 1, 2 or 3, got {}",
                dims.len()
            )));
        }
        if spacing.len() != dims.len() {
            return Err(Error::Structural(format!(
                "{} spacings given for {} axes",
                spacing.len(),
                dims.len()
            )));
        }
        if let Some(a) = dims.iter().position(|&n| n < 2) {
            return Err(Error::Structural(format!(
                "axis {a} has {} cells, need at least 2",
                dims[a]
            )));
        }
        if let Some(a) = spacing.iter().position(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Structural(format!(
                "axis {a} spacing must be positive and finite, got {}",
                spacing[a]
            )));
        }
        let cells = dims.iter().product::<usize>();
        if control_mask.len() != cells {
            return Err(Error::Structural(format!(
                "control mask has {} entries for {cells} cells",
                control_mask.len()
            )));
        }
        let strides = strides_for(&dims);
        Ok(Grid {
            dims,
            spacing,
            control_mask,
            strides,
        })
    }

    /// Uniform grid on the box `[0, lengths[a]]` with `dims[a]` cells per axis.
    pub fn on_box(dims: Vec<usize>, lengths: &[f64]) -> Result<Self> {
        if lengths.len() != dims.len() {
            return Err(Error::Structural(format!(
                "{} lengths given for {} axes",
                lengths.len(),
                dims.len()
            )));
        }
        let spacing = dims
            .iter()
            .zip(lengths)
            .map(|(&n, &l)| l / n as f64)
            .collect();
        Self::new(dims, spacing)
    }

    /// Replaces the control mask, keeping the geometry.
    pub fn with_control_mask(&self, mask: Vec<bool>) -> Result<Self> {
        Self::with_mask(self.dims.clone(), self.spacing.clone(), mask)
    }

    /// Marks as controlled every cell whose center lies in the box `[lo, hi]`.
    pub fn with_control_box(&self, lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != self.ndim() || hi.len() != self.ndim() {
            return Err(Error::Structural(
                "control box corners must have one entry per axis".into(),
            ));
        }
        let mask = (0..self.len())
            .map(|i| {
                let x = self.center(i);
                (0..self.ndim()).all(|a| x[a] >= lo[a] && x[a] <= hi[a])
            })
            .collect();
        self.with_control_mask(mask)
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn control_mask(&self) -> &[bool] {
        &self.control_mask
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.dims
            .iter()
            .zip(&self.spacing)
            .map(|(&n, &h)| n as f64 * h)
            .collect()
    }

    pub fn measure(&self) -> f64 {
        self.lengths().iter().product()
    }

    pub fn coord(&self, cell: usize, axis: usize) -> usize {
        (cell / self.strides[axis]) % self.dims[axis]
    }

    pub fn coords(&self, cell: usize) -> Vec<usize> {
        (0..self.ndim()).map(|a| self.coord(cell, a)).collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c * s)
            .sum()
    }

    /// Physical position of the cell center.
    pub fn center(&self, cell: usize) -> Vec<f64> {
        (0..self.ndim())
            .map(|a| (self.coord(cell, a) as f64 + 0.5) * self.spacing[a])
            .collect()
    }

    /// Neighbour of `cell` along `axis` in direction `+1`/`-1`, mirrored onto
    /// the cell itself at the boundary.
    pub fn mirrored_neighbour(&self, cell: usize, axis: usize, forward: bool) -> usize {
        let c = self.coord(cell, axis);
        if forward {
            if c + 1 < self.dims[axis] {
                cell + self.strides[axis]
            } else {
                cell
            }
        } else if c > 0 {
            cell - self.strides[axis]
        } else {
            cell
        }
    }

    /// All interior faces, axis by axis.
    pub fn faces(&self) -> impl Iterator<Item = Face> + '_ {
        (0..self.ndim()).flat_map(move |axis| {
            let stride = self.strides[axis];
            let n = self.dims[axis];
            (0..self.len())
                .filter(move |&i| (i / stride) % n + 1 < n)
                .map(move |lo| Face {
                    axis,
                    lo,
                    hi: lo + stride,
                })
        })
    }

    /// Half-bandwidth of the 2d+1 point stencil matrix in this ordering.
    pub fn bandwidth(&self) -> usize {
        self.strides[self.ndim() - 1]
    }
}

/// Cell values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Structural(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value {} at cell {i}",
                values[i]
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        Field {
            grid,
            values: vec![c; n],
        }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.center(i))).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Cellwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        check_same_grid(self, other)?;
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn from_parts_unchecked(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Field { grid, values }
    }
}

impl Index<usize> for Field {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> bool {
    std::ptr::eq(a, b) || (a.dims == b.dims && a.spacing == b.spacing)
}

pub fn check_same_grid(a: &Field, b: &Field) -> Result<()> {
    if same_grid(&a.grid, &b.grid) {
        Ok(())
    } else {
        Err(Error::Structural(format!(
            "grid mismatch: dims {:?}/{:?}, spacing {:?}/{:?}",
            a.grid.dims, b.grid.dims, a.grid.spacing, b.grid.spacing
        )))
    }
}

/// Cell-centered Laplacian with homogeneous Neumann closure.
pub fn laplacian_neumann(phi: &Field) -> Field {
    let grid = phi.grid();
    let mut out = vec![0.0; grid.len()];
    for face in grid.faces() {
        let h = grid.spacing[face.axis];
        let d = (phi.values[face.hi] - phi.values[face.lo]) / (h * h);
        out[face.lo] += d;
        out[face.hi] -= d;
    }
    Field::from_parts_unchecked(grid.clone(), out)
}

/// Upwind face flux `T(u)_up * dv/dx` of the chemotaxis transport, oriented
/// from `lo` to `hi`.
#[inline]
pub(crate) fn chemotaxis_face_flux(u_trunc: &[f64], v: &[f64], face: Face, h: f64) -> f64 {
    let dv = (v[face.hi] - v[face.lo]) / h;
    let mobility = if dv > 0.0 {
        u_trunc[face.lo]
    } else {
        u_trunc[face.hi]
    };
    mobility * dv
}

/// Discrete `-div(u_trunc grad v)` in conservative upwind flux form.
///
/// Cells are transported up the gradient of `v`; the mobility at a face is
/// taken from the cell the flux leaves.
pub fn chemotaxis_divergence(u_trunc: &Field, v: &Field) -> Result<Field> {
    check_same_grid(u_trunc, v)?;
    let grid = u_trunc.grid();
    let mut out = vec![0.0; grid.len()];
    for face in grid.faces() {
        let h = grid.spacing[face.axis];
        let flux = chemotaxis_face_flux(&u_trunc.values, &v.values, face, h) / h;
        out[face.lo] -= flux;
        out[face.hi] += flux;
    }
    Ok(Field::from_parts_unchecked(grid.clone(), out))
}

pub fn integrate(phi: &Field) -> f64 {
    phi.values.iter().sum::<f64>() * phi.grid.cell_volume()
}

/// Discrete `L^p(Omega)` norm; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(phi: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(phi.values.iter().fold(0.0, |m, &x| f64::max(m, x.abs())));
    }
    let vol = phi.grid.cell_volume();
    if p == 2.0 {
        return Ok((phi.values.iter().map(|x| x * x).sum::<f64>() * vol).sqrt());
    }
    let sum: f64 = phi.values.iter().map(|x| x.abs().powf(p)).sum();
    Ok((sum * vol).powf(1.0 / p))
}

/// `L^2` norm of the face-difference gradient.
pub fn h1_seminorm(phi: &Field) -> f64 {
    let grid = phi.grid();
    let mut sum = 0.0;
    for face in grid.faces() {
        let h = grid.spacing[face.axis];
        let d = (phi.values[face.hi] - phi.values[face.lo]) / h;
        sum += d * d;
    }
    (sum * grid.cell_volume()).sqrt()
}

/// Discrete `L^2` inner product.
pub fn inner(a: &Field, b: &Field) -> Result<f64> {
    check_same_grid(a, b)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * a.grid.cell_volume())
}
