//! Discrete geometries: the unit interval and the periodic strip.
//!
//! Nodes are numbered `j * nx + i` with `i` the (periodic) x index and `j`
//! the y index, `j = 0` being the bottom boundary `y = 0` and `j = ny` the
//! top boundary `y = 1`. The interval is the degenerate case `nx = 1`.
//! Boundary nodes are listed bottom circle first, then top circle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_NX: usize = 4;
pub const MIN_NY: usize = 2;

pub type BoundaryMatrix = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeometryKind {
    Interval,
    PeriodicStrip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub kind: GeometryKind,
    /// Period in x. Ignored for the interval.
    pub length: f64,
    /// Cells around the strip. Ignored for the interval.
    pub nx: usize,
    /// Subintervals across (0, 1).
    pub ny: usize,
}

impl GeometrySpec {
    pub fn interval(ny: usize) -> Self {
        Self {
            kind: GeometryKind::Interval,
            length: 1.0,
            nx: 1,
            ny,
        }
    }

    pub fn strip(length: f64, nx: usize, ny: usize) -> Self {
        Self {
            kind: GeometryKind::PeriodicStrip,
            length,
            nx,
            ny,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ny < MIN_NY {
            return Err(Error::InvalidGeometry(format!(
                "ny = {} is below the minimum {MIN_NY}",
                self.ny
            )));
        }
        if self.kind == GeometryKind::PeriodicStrip {
            if self.nx < MIN_NX {
                return Err(Error::InvalidGeometry(format!(
                    "nx = {} is below the minimum {MIN_NX}",
                    self.nx
                )));
            }
            if !(self.length > 0.0) || !self.length.is_finite() {
                return Err(Error::InvalidGeometry(format!(
                    "strip period must be positive, got {}",
                    self.length
                )));
            }
        }
        Ok(())
    }

    /// The interval with the same y resolution.
    pub fn reduced(&self) -> Self {
        Self::interval(self.ny)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySide {
    Bottom,
    Top,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub spec: GeometrySpec,
    pub hx: f64,
    pub hy: f64,
    nx: usize,
    ny: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    domain_weights: Vec<f64>,
    boundary_weights: Vec<f64>,
    normal_sign: Vec<f64>,
}

pub fn build_grid(spec: GeometrySpec) -> Result<Grid> {
    spec.validate()?;
    let (nx, hx) = match spec.kind {
        GeometryKind::Interval => (1, 1.0),
        GeometryKind::PeriodicStrip => (spec.nx, spec.length / spec.nx as f64),
    };
    let ny = spec.ny;
    let hy = 1.0 / ny as f64;
    let xs: Vec<f64> = (0..nx).map(|i| i as f64 * hx).collect();
    let ys: Vec<f64> = (0..=ny).map(|j| j as f64 * hy).collect();

    let n = nx * (ny + 1);
    let mut interior = Vec::with_capacity(nx * (ny - 1));
    let mut boundary = Vec::with_capacity(2 * nx);
    for j in 1..ny {
        for i in 0..nx {
            interior.push(j * nx + i);
        }
    }
    boundary.extend(0..nx);
    boundary.extend((0..nx).map(|i| ny * nx + i));

    // trapezoid in y, periodic trapezoid (uniform) in x
    let cell_x = match spec.kind {
        GeometryKind::Interval => 1.0,
        GeometryKind::PeriodicStrip => hx,
    };
    let mut domain_weights = vec![0.0; n];
    for j in 0..=ny {
        let wy = if j == 0 || j == ny { 0.5 * hy } else { hy };
        for i in 0..nx {
            domain_weights[j * nx + i] = wy * cell_x;
        }
    }
    // counting measure on the two interval endpoints
    let boundary_weights = vec![cell_x; 2 * nx];
    let mut normal_sign = vec![-1.0; nx];
    normal_sign.extend(std::iter::repeat_n(1.0, nx));

    Ok(Grid {
        spec,
        hx,
        hy,
        nx,
        ny,
        xs,
        ys,
        interior,
        boundary,
        domain_weights,
        boundary_weights,
        normal_sign,
    })
}

impl Grid {
    pub fn kind(&self) -> GeometryKind {
        self.spec.kind
    }

    pub fn is_interval(&self) -> bool {
        self.spec.kind == GeometryKind::Interval
    }

    /// Nodes per horizontal line (1 on the interval).
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn node_count(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    pub fn boundary_count(&self) -> usize {
        2 * self.nx
    }

    pub fn interior_count(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn coords(&self, node: usize) -> (f64, f64) {
        (self.xs[node % self.nx], self.ys[node / self.nx])
    }

    pub fn interior_indices(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_indices(&self) -> &[usize] {
        &self.boundary
    }

    pub fn domain_weights(&self) -> &[f64] {
        &self.domain_weights
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    pub fn normal_signs(&self) -> &[f64] {
        &self.normal_sign
    }

    /// Side and x index of boundary position `k`.
    pub fn boundary_position(&self, k: usize) -> (BoundarySide, usize) {
        if k < self.nx {
            (BoundarySide::Bottom, k)
        } else {
            (BoundarySide::Top, k - self.nx)
        }
    }

    /// Measure of the domain.
    pub fn domain_measure(&self) -> f64 {
        match self.spec.kind {
            GeometryKind::Interval => 1.0,
            GeometryKind::PeriodicStrip => self.spec.length,
        }
    }

    /// Measure of the boundary (counting measure on the interval).
    pub fn boundary_measure(&self) -> f64 {
        match self.spec.kind {
            GeometryKind::Interval => 2.0,
            GeometryKind::PeriodicStrip => 2.0 * self.spec.length,
        }
    }

    pub fn trace(&self, u: &DomainField) -> Result<BoundaryField> {
        check_len(self.node_count(), u.len())?;
        Ok(BoundaryField(
            self.boundary.iter().map(|&n| u.0[n]).collect(),
        ))
    }

    /// Boundary L2 inner product.
    pub fn boundary_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.boundary_weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    pub fn boundary_l2(&self, a: &[f64]) -> f64 {
        self.boundary_dot(a, a).sqrt()
    }

    pub fn domain_l2(&self, a: &[f64]) -> f64 {
        self.domain_weights
            .iter()
            .zip(a)
            .map(|(w, x)| w * x * x)
            .sum::<f64>()
            .sqrt()
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::SizeMismatch { expected, actual });
    }
    Ok(())
}

/// Grid function on all nodes of the closed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainField(pub Vec<f64>);

/// Grid function on the boundary nodes, in boundary order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryField(pub Vec<f64>);

macro_rules! field_common {
    ($name:ident) => {
        impl $name {
            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn values(&self) -> &[f64] {
                &self.0
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn max_abs(&self) -> f64 {
                self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            pub fn ensure_finite(&self) -> Result<()> {
                match self.0.iter().position(|v| !v.is_finite()) {
                    Some(index) => Err(Error::NonFinite { index }),
                    None => Ok(()),
                }
            }

            pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
                Self(self.0.iter().map(|&v| f(v)).collect())
            }
        }
    };
}

field_common!(DomainField);
field_common!(BoundaryField);

impl DomainField {
    pub fn zeros(grid: &Grid) -> Self {
        Self(vec![0.0; grid.node_count()])
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self(vec![c; grid.node_count()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self(
            (0..grid.node_count())
                .map(|n| {
                    let (x, y) = grid.coords(n);
                    f(x, y)
                })
                .collect(),
        )
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        check_len(grid.node_count(), values.len())?;
        Ok(Self(values))
    }
}

impl BoundaryField {
    pub fn zeros(grid: &Grid) -> Self {
        Self(vec![0.0; grid.boundary_count()])
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self(vec![c; grid.boundary_count()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, BoundarySide) -> f64) -> Self {
        Self(
            (0..grid.boundary_count())
                .map(|k| {
                    let (side, i) = grid.boundary_position(k);
                    f(grid.xs[i], side)
                })
                .collect(),
        )
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        check_len(grid.boundary_count(), values.len())?;
        Ok(Self(values))
    }
}

pub fn integrate_domain(grid: &Grid, w: &DomainField) -> Result<f64> {
    check_len(grid.node_count(), w.len())?;
    Ok(grid
        .domain_weights
        .iter()
        .zip(&w.0)
        .map(|(a, b)| a * b)
        .sum())
}

pub fn integrate_boundary(grid: &Grid, psi: &BoundaryField) -> Result<f64> {
    check_len(grid.boundary_count(), psi.len())?;
    Ok(grid
        .boundary_weights
        .iter()
        .zip(&psi.0)
        .map(|(a, b)| a * b)
        .sum())
}

/// Discrete `div_Γ(δ ∇_Γ ·)` on the boundary circles, in flux form with δ
/// averaged at half points. This is the negative of the surface operator
/// `C = -div_Γ(δ ∇_Γ ·)`, so the returned matrix is negative semidefinite.
/// On the interval the boundary is zero-dimensional and the matrix is zero.
pub fn surface_laplacian_matrix(grid: &Grid, delta: &BoundaryField) -> Result<BoundaryMatrix> {
    let m = grid.boundary_count();
    check_len(m, delta.len())?;
    for (index, &value) in delta.0.iter().enumerate() {
        if value < 0.0 || value.is_nan() {
            return Err(Error::NegativeDiffusivity { index, value });
        }
    }
    let mut lap = DMatrix::zeros(m, m);
    if grid.is_interval() {
        return Ok(lap);
    }
    let nx = grid.nx;
    let inv_h2 = 1.0 / (grid.hx * grid.hx);
    for circle in 0..2 {
        let off = circle * nx;
        for i in 0..nx {
            let ip = (i + 1) % nx;
            let half = 0.5 * (delta.0[off + i] + delta.0[off + ip]) * inv_h2;
            let (a, b) = (off + i, off + ip);
            lap[(a, a)] -= half;
            lap[(b, b)] -= half;
            lap[(a, b)] += half;
            lap[(b, a)] += half;
        }
    }
    Ok(lap)
}

/// `d ∂_ν u` at every boundary node from the second-order one-sided
/// three-point stencil in y, outward sign included.
pub fn normal_flux(grid: &Grid, u: &DomainField, d: &DomainField) -> Result<BoundaryField> {
    check_len(grid.node_count(), u.len())?;
    check_len(grid.node_count(), d.len())?;
    let nx = grid.nx;
    let ny = grid.ny;
    let scale = 0.5 / grid.hy;
    let mut out = Vec::with_capacity(2 * nx);
    for (j0, step) in [(0isize, 1isize), (ny as isize, -1)] {
        for i in 0..nx {
            let at = |k: isize| u.0[((j0 + step * k) as usize) * nx + i];
            let b = j0 as usize * nx + i;
            out.push(d.0[b] * scale * (3.0 * at(0) - 4.0 * at(1) + at(2)));
        }
    }
    Ok(BoundaryField(out))
}
