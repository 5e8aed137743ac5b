//! Discretized space-time cylinder `(0,T) x Omega` on a uniform box.
//!
//! Spatial nodes are stored row-major over `(x1, x2)`; space-time fields are
//! time-major, so node `(m, i, j)` lives at `m * n_space + i * nx[1] + j`.
//! In one dimension the second axis is a dummy of length one.

pub mod boundary;
pub mod io;
pub mod norms;
pub mod ops;
pub mod stencil;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub use boundary::{BoundaryLayout, Edge, Side};
pub use norms::{norms, scalar_norms, sigma_norm_squares, NormSet};
pub use ops::{boundary_flux, dalembertian, divergence_tx, dt, dx, dx_scalar, grad_space, grad_tx, laplacian, laplacian_st};

/// CFL safety factor of the explicit leapfrog scheme.
pub const CFL_FACTOR: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub nx: [usize; 2],
    pub h: [f64; 2],
    pub t_final: f64,
    pub nt: usize,
    pub tau: f64,
}

/// Smallest `nt` for which `T/(nt-1)` satisfies the CFL bound.
pub fn min_admissible_nt(dim: usize, h_min: f64, t_final: f64) -> usize {
    let limit = CFL_FACTOR * h_min / (dim as f64).sqrt();
    let steps = (t_final / limit * (1.0 - 1e-12)).ceil().max(2.0) as usize;
    steps + 1
}

/// Builds and validates a grid over the box `origin + [0, extent]`.
pub fn make_grid(
    dim: usize,
    origin: &[f64],
    extent: &[f64],
    nx: &[usize],
    t_final: f64,
    nt: usize,
) -> Result<GridSpec> {
    if dim != 1 && dim != 2 {
        return Err(LabError::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
    }
    if origin.len() != dim || extent.len() != dim || nx.len() != dim {
        return Err(LabError::InvalidGrid(format!(
            "origin, extent and nx must each have {dim} entries"
        )));
    }
    let mut g = GridSpec {
        dim,
        origin: [0.0; 2],
        extent: [0.0; 2],
        nx: [1; 2],
        h: [0.0; 2],
        t_final,
        nt,
        tau: 0.0,
    };
    for a in 0..dim {
        if nx[a] < 3 {
            return Err(LabError::InvalidGrid(format!("nx[{a}] = {} < 3", nx[a])));
        }
        if !(extent[a] > 0.0) || !extent[a].is_finite() || !origin[a].is_finite() {
            return Err(LabError::InvalidGrid(format!("extent[{a}] must be positive and finite")));
        }
        g.origin[a] = origin[a];
        g.extent[a] = extent[a];
        g.nx[a] = nx[a];
        g.h[a] = extent[a] / (nx[a] - 1) as f64;
    }
    if nt < 3 {
        return Err(LabError::InvalidGrid(format!("nt = {nt} < 3")));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(LabError::InvalidGrid("final time must be positive".into()));
    }
    g.tau = t_final / (nt - 1) as f64;
    let limit = g.cfl_limit();
    if g.tau > limit * (1.0 + 1e-12) {
        return Err(LabError::Cfl {
            tau: g.tau,
            limit,
            min_nt: min_admissible_nt(dim, g.h_min(), t_final),
        });
    }
    Ok(g)
}

impl GridSpec {
    /// Unit interval `(0,1)` with the given resolution.
    pub fn unit_interval(nx: usize, t_final: f64, nt: usize) -> Result<Self> {
        make_grid(1, &[0.0], &[1.0], &[nx], t_final, nt)
    }

    /// Unit square `(0,1)^2` with `n x n` nodes.
    pub fn unit_square(n: usize, t_final: f64, nt: usize) -> Result<Self> {
        make_grid(2, &[0.0, 0.0], &[1.0, 1.0], &[n, n], t_final, nt)
    }

    pub fn cfl_limit(&self) -> f64 {
        CFL_FACTOR * self.h_min() / (self.dim as f64).sqrt()
    }

    pub fn h_min(&self) -> f64 {
        self.h[..self.dim].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.h[..self.dim].iter().cloned().fold(0.0, f64::max)
    }

    pub fn n_space(&self) -> usize {
        self.nx[0] * self.nx[1]
    }

    pub fn n_total(&self) -> usize {
        self.nt * self.n_space()
    }

    /// Shape `[nt, nx1, nx2]` of a space-time array.
    pub fn shape(&self) -> [usize; 3] {
        [self.nt, self.nx[0], self.nx[1]]
    }

    /// Shape `[1, nx1, nx2]` of a spatial array.
    pub fn space_shape(&self) -> [usize; 3] {
        [1, self.nx[0], self.nx[1]]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.nx[1] + j
    }

    /// Per-axis indices of a spatial node.
    #[inline]
    pub fn indices(&self, node: usize) -> [usize; 2] {
        [node / self.nx[1], node % self.nx[1]]
    }

    #[inline]
    pub fn coord(&self, node: usize) -> [f64; 2] {
        let [i, j] = self.indices(node);
        [
            self.origin[0] + i as f64 * self.h[0],
            self.origin[1] + j as f64 * self.h[1],
        ]
    }

    #[inline]
    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.tau
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.indices(node);
        (0..self.dim).any(|a| idx[a] == 0 || idx[a] == self.nx[a] - 1)
    }

    /// Lebesgue measure of the spatial box.
    pub fn measure(&self) -> f64 {
        self.extent[..self.dim].iter().product()
    }

    pub fn time_weights(&self) -> Vec<f64> {
        stencil::trapezoid_weights(self.nt, self.tau)
    }

    /// Tensor trapezoidal weights over the spatial nodes.
    pub fn space_weights(&self) -> Vec<f64> {
        let w0 = stencil::trapezoid_weights(self.nx[0], self.h[0]);
        let w1 = if self.dim == 2 {
            stencil::trapezoid_weights(self.nx[1], self.h[1])
        } else {
            vec![1.0]
        };
        let mut w = Vec::with_capacity(self.n_space());
        for a in &w0 {
            for b in &w1 {
                w.push(a * b);
            }
        }
        w
    }

    /// Same spatial mesh, new time axis.
    pub fn with_time(&self, t_final: f64, nt: usize) -> Result<Self> {
        make_grid(
            self.dim,
            &self.origin[..self.dim],
            &self.extent[..self.dim],
            &self.nx[..self.dim],
            t_final,
            nt,
        )
    }

    /// Halves every spatial step and the time step.
    pub fn refined(&self) -> Result<Self> {
        let nx: Vec<usize> = self.nx[..self.dim].iter().map(|n| 2 * n - 1).collect();
        make_grid(
            self.dim,
            &self.origin[..self.dim],
            &self.extent[..self.dim],
            &nx,
            self.t_final,
            2 * self.nt - 1,
        )
    }

    pub(crate) fn same_space(&self, other: &GridSpec) -> bool {
        self.dim == other.dim
            && self.nx == other.nx
            && (0..self.dim).all(|a| {
                (self.h[a] - other.h[a]).abs() <= 1e-12 * self.h[a]
                    && (self.origin[a] - other.origin[a]).abs() <= 1e-12 * (1.0 + self.origin[a].abs())
            })
    }

    pub(crate) fn same_spacetime(&self, other: &GridSpec) -> bool {
        self.same_space(other)
            && self.nt == other.nt
            && (self.tau - other.tau).abs() <= 1e-12 * self.tau
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(LabError::NonFinite(format!("{what} has a non-finite value at index {i}")));
    }
    Ok(())
}

/// A function on the spatial nodes of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_space() {
            return Err(LabError::FieldMismatch(format!(
                "scalar field needs {} values, got {}",
                grid.n_space(),
                values.len()
            )));
        }
        check_finite(&values, "scalar field")?;
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField { values: vec![0.0; grid.n_space()], grid }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        ScalarField { values: vec![c; grid.n_space()], grid }
    }

    /// Samples `f(x)` where `x` holds `dim` coordinates.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.n_space())
            .map(|k| {
                let x = grid.coord(k);
                f(&x[..grid.dim])
            })
            .collect();
        ScalarField { grid, values }
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_space());
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.grid.same_space(&other.grid), "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        ScalarField::from_raw(self.grid, values)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Trapezoidal integral over the spatial box.
    pub fn integrate(&self) -> f64 {
        self.grid.space_weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    /// `L²(Omega)` inner product.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        let w = self.grid.space_weights();
        w.iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}

/// A function on the space-time nodes of a grid, stored time-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_total() {
            return Err(LabError::FieldMismatch(format!(
                "space-time field needs {} values, got {}",
                grid.n_total(),
                values.len()
            )));
        }
        check_finite(&values, "space-time field")?;
        Ok(SpaceTimeField { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        SpaceTimeField { values: vec![0.0; grid.n_total()], grid }
    }

    /// Samples `f(t, x)`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let ns = grid.n_space();
        let coords: Vec<[f64; 2]> = (0..ns).map(|k| grid.coord(k)).collect();
        let mut values = Vec::with_capacity(grid.n_total());
        for m in 0..grid.nt {
            let t = grid.time(m);
            for x in &coords {
                values.push(f(t, &x[..grid.dim]));
            }
        }
        SpaceTimeField { grid, values }
    }

    /// Time-independent extension of a spatial field.
    pub fn from_static(field: &ScalarField) -> Self {
        let grid = field.grid;
        let mut values = Vec::with_capacity(grid.n_total());
        for _ in 0..grid.nt {
            values.extend_from_slice(field.values());
        }
        SpaceTimeField { grid, values }
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_total());
        SpaceTimeField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, m: usize, node: usize) -> f64 {
        self.values[m * self.grid.n_space() + node]
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        let ns = self.grid.n_space();
        &self.values[m * ns..(m + 1) * ns]
    }

    pub fn time_slice(&self, m: usize) -> ScalarField {
        ScalarField::from_raw(self.grid, self.slice(m).to_vec())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SpaceTimeField::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &SpaceTimeField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.grid.same_spacetime(&other.grid), "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        SpaceTimeField::from_raw(self.grid, values)
    }

    pub fn sub(&self, other: &SpaceTimeField) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &SpaceTimeField) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &SpaceTimeField) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoidal integral over `Q_T`.
    pub fn integrate(&self) -> f64 {
        let wt = self.grid.time_weights();
        let ws = self.grid.space_weights();
        let ns = ws.len();
        let mut total = 0.0;
        for (m, wm) in wt.iter().enumerate() {
            let row = &self.values[m * ns..(m + 1) * ns];
            let s: f64 = row.iter().zip(&ws).map(|(v, w)| v * w).sum();
            total += wm * s;
        }
        total
    }
}
