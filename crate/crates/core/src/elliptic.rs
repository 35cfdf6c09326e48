//! Interior solvers: the linear Dirichlet solution operator `R_λ(f, g)`,
//! the nonlinear Dirichlet operator `D_λ` obtained as a Picard fixed point
//! of `u ↦ R_λ(f(u), g)`, and the Dirichlet-to-Neumann matrix.

use std::sync::Arc;

use log::debug;
use rayon::prelude::*;
use sprs::{CsMat, TriMat};

use crate::banded::BandedCholesky;
use crate::error::{Error, Result};
use crate::grid::{build_grid, normal_flux, BoundaryField, BoundaryMatrix, DomainField, Grid};
use crate::nonlinearity::FunctionSpec;

/// Empirical contraction surrogate: Picard is expected to contract once
/// `λ >= CONTRACTION_FACTOR * Lip(f)`. Logged, never enforced.
pub const CONTRACTION_FACTOR: f64 = 4.0;

/// `λ + A_h` on the interior nodes, with `A_h = -div(d ∇·)` in flux form
/// (arithmetic-mean `d` at half points). Boundary values are eliminated and
/// re-enter through [`SparseOperator::coupling`].
#[derive(Debug, Clone)]
pub struct SparseOperator {
    grid: Arc<Grid>,
    lambda: f64,
    d: DomainField,
    matrix: CsMat<f64>,
    /// `(interior row, boundary position, weight)`: the row's right-hand
    /// side gains `weight * g[position]`.
    coupling: Vec<(usize, usize, f64)>,
    factor: BandedCholesky,
}

pub fn assemble_interior(grid: &Arc<Grid>, d: &DomainField, lambda: f64) -> Result<SparseOperator> {
    assemble_shifted(grid, d, lambda, None)
}

/// As [`assemble_interior`] with an additional nonnegative zeroth-order
/// coefficient `shift` (one value per node).
fn assemble_shifted(
    grid: &Arc<Grid>,
    d: &DomainField,
    lambda: f64,
    shift: Option<&[f64]>,
) -> Result<SparseOperator> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositiveLambda(lambda));
    }
    if d.len() != grid.node_count() {
        return Err(Error::SizeMismatch {
            expected: grid.node_count(),
            actual: d.len(),
        });
    }
    let dmin = d.values().iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(dmin > 0.0) || d.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateDiffusivity(dmin));
    }

    let nx = grid.nx();
    let ny = grid.ny();
    let n = grid.interior_count();
    let row_of = |i: usize, j: usize| (j - 1) * nx + i;
    let dv = d.values();
    let half = |a: usize, b: usize| 0.5 * (dv[a] + dv[b]);
    let (ihx2, ihy2) = (1.0 / (grid.hx * grid.hx), 1.0 / (grid.hy * grid.hy));

    let mut tri = TriMat::with_capacity((n, n), 5 * n);
    let mut coupling = Vec::with_capacity(2 * nx);
    for j in 1..ny {
        for i in 0..nx {
            let me = grid.node(i, j);
            let r = row_of(i, j);
            let mut diag = lambda + shift.map_or(0.0, |v| v[me]);
            if !grid.is_interval() {
                for ii in [(i + nx - 1) % nx, (i + 1) % nx] {
                    let c = half(me, grid.node(ii, j)) * ihx2;
                    diag += c;
                    tri.add_triplet(r, row_of(ii, j), -c);
                }
            }
            for jj in [j - 1, j + 1] {
                let c = half(me, grid.node(i, jj)) * ihy2;
                diag += c;
                if jj == 0 {
                    coupling.push((r, i, c));
                } else if jj == ny {
                    coupling.push((r, nx + i, c));
                } else {
                    tri.add_triplet(r, row_of(i, jj), -c);
                }
            }
            tri.add_triplet(r, r, diag);
        }
    }
    let matrix: CsMat<f64> = tri.to_csr();
    let factor = BandedCholesky::factor(matrix.view(), nx)?;
    Ok(SparseOperator {
        grid: Arc::clone(grid),
        lambda,
        d: d.clone(),
        matrix,
        coupling,
        factor,
    })
}

impl SparseOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn diffusivity(&self) -> &DomainField {
        &self.d
    }

    pub fn matrix(&self) -> &CsMat<f64> {
        &self.matrix
    }

    pub fn coupling(&self) -> &[(usize, usize, f64)] {
        &self.coupling
    }

    /// `(λ + A_h) u` at interior nodes, using the boundary values of `u`.
    pub fn apply(&self, u: &DomainField) -> Result<Vec<f64>> {
        let grid = &self.grid;
        if u.len() != grid.node_count() {
            return Err(Error::SizeMismatch {
                expected: grid.node_count(),
                actual: u.len(),
            });
        }
        let interior = grid.interior_indices();
        let mut out = vec![0.0; interior.len()];
        for (r, vec) in self.matrix.outer_iterator().enumerate() {
            out[r] = vec.iter().map(|(c, v)| v * u.values()[interior[c]]).sum();
        }
        let bidx = grid.boundary_indices();
        for &(r, k, c) in &self.coupling {
            out[r] -= c * u.values()[bidx[k]];
        }
        Ok(out)
    }
}

/// Discrete `R_λ(rhs, g)`: solves `(λ + A_h) u = rhs` at interior nodes
/// with `u = g` on the boundary.
pub fn dirichlet_solve(op: &SparseOperator, rhs: &DomainField, g: &BoundaryField) -> Result<DomainField> {
    let grid = &op.grid;
    if rhs.len() != grid.node_count() {
        return Err(Error::SizeMismatch {
            expected: grid.node_count(),
            actual: rhs.len(),
        });
    }
    if g.len() != grid.boundary_count() {
        return Err(Error::SizeMismatch {
            expected: grid.boundary_count(),
            actual: g.len(),
        });
    }
    let interior = grid.interior_indices();
    let mut b: Vec<f64> = interior.iter().map(|&n| rhs.values()[n]).collect();
    for &(r, k, c) in &op.coupling {
        b[r] += c * g.values()[k];
    }
    let mut x = b.clone();
    op.factor.solve_in_place(&mut x);
    // one step of iterative refinement recovers the digits lost to the
    // O(h^-2) condition number
    let mut r = b;
    for (row, vec) in op.matrix.outer_iterator().enumerate() {
        r[row] -= vec.iter().map(|(c, v)| v * x[c]).sum::<f64>();
    }
    op.factor.solve_in_place(&mut r);
    for (xi, ri) in x.iter_mut().zip(&r) {
        *xi += ri;
    }
    let b = x;
    if let Some(p) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::SolveFailure(format!("non-finite solution at interior row {p}")));
    }
    let mut u = vec![0.0; grid.node_count()];
    for (&n, v) in interior.iter().zip(b) {
        u[n] = v;
    }
    for (&n, &v) in grid.boundary_indices().iter().zip(g.values()) {
        u[n] = v;
    }
    Ok(DomainField(u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// Largest ratio of successive step sizes observed.
    pub contraction_ratio: f64,
    pub final_step: f64,
}

/// Discrete `D_λ(g)`: the fixed point of `u ↦ R_λ(f(u), g)`.
pub fn nonlinear_dirichlet_solve(
    op: &SparseOperator,
    f: &FunctionSpec,
    g: &BoundaryField,
    tol: f64,
    max_iter: usize,
) -> Result<(DomainField, FixedPointReport)> {
    nonlinear_dirichlet_solve_from(op, f, g, None, tol, max_iter)
}

/// As [`nonlinear_dirichlet_solve`], warm-started from `initial` when given
/// (otherwise from `R_λ(0, g)`). Convergence is declared when the sup-norm
/// step drops below `tol * max(1, |u|_∞)`.
pub fn nonlinear_dirichlet_solve_from(
    op: &SparseOperator,
    f: &FunctionSpec,
    g: &BoundaryField,
    initial: Option<&DomainField>,
    tol: f64,
    max_iter: usize,
) -> Result<(DomainField, FixedPointReport)> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("fixed-point tolerance must be positive, got {tol}")));
    }
    if f.role != crate::nonlinearity::Role::InteriorF {
        return Err(Error::InvalidFunction("Dirichlet solve needs an interior reaction".into()));
    }
    if f.is_zero() {
        let u = dirichlet_solve(op, &DomainField::zeros(&op.grid), g)?;
        return Ok((
            u,
            FixedPointReport {
                iterations: 1,
                contraction_ratio: 0.0,
                final_step: 0.0,
            },
        ));
    }
    if let Some(lip) = f.lipschitz_bound() {
        if op.lambda < CONTRACTION_FACTOR * lip {
            debug!(
                "lambda = {} is below the contraction surrogate {} * Lip(f) = {}",
                op.lambda,
                CONTRACTION_FACTOR,
                CONTRACTION_FACTOR * lip
            );
        }
    }
    let mut u = match initial {
        Some(u0) => {
            let mut u0 = u0.clone();
            for (&n, &v) in op.grid.boundary_indices().iter().zip(g.values()) {
                u0.0[n] = v;
            }
            u0
        }
        None => dirichlet_solve(op, &DomainField::zeros(&op.grid), g)?,
    };
    let mut ratio: f64 = 0.0;
    let mut prev_step: Option<f64> = None;
    for it in 1..=max_iter {
        let next = dirichlet_solve(op, &u.map(|s| f.eval(s)), g)?;
        let step = next
            .values()
            .iter()
            .zip(u.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        u = next;
        let scale = u.max_abs().max(1.0);
        if step <= tol * scale {
            return Ok((
                u,
                FixedPointReport {
                    iterations: it,
                    contraction_ratio: ratio,
                    final_step: step,
                },
            ));
        }
        if let Some(p) = prev_step {
            if p > 0.0 {
                ratio = ratio.max(step / p);
            }
        }
        if !step.is_finite() || ratio >= 1.0 {
            return Err(Error::NonContraction {
                ratio: if step.is_finite() { ratio } else { f64::INFINITY },
                iterations: it,
            });
        }
        prev_step = Some(step);
    }
    Err(Error::NonContraction {
        ratio,
        iterations: max_iter,
    })
}

/// Dirichlet-to-Neumann matrix: column `j` is the normal flux of the
/// `(λ + A_h)`-harmonic extension of the `j`-th boundary unit vector.
///
/// On the strip with x-invariant `d` the operator commutes with x-shifts,
/// so the matrix is assembled from its 2×2 blocks on each discrete Fourier
/// mode; the zero mode is then bitwise the interval problem. Otherwise the
/// columns are solved directly, sharing the factorization.
pub fn assemble_dtn(op: &SparseOperator) -> Result<BoundaryMatrix> {
    if !op.grid.is_interval() && x_invariant(&op.grid, &op.d) {
        assemble_dtn_fourier(op)
    } else {
        assemble_dtn_direct(op)
    }
}

fn x_invariant(grid: &Grid, d: &DomainField) -> bool {
    let nx = grid.nx();
    d.values().chunks(nx).all(|row| row.iter().all(|&v| v == row[0]))
}

/// Column-by-column DtN assembly, valid for any diffusivity.
pub fn assemble_dtn_direct(op: &SparseOperator) -> Result<BoundaryMatrix> {
    let grid = &op.grid;
    let m = grid.boundary_count();
    let zero = DomainField::zeros(grid);
    let columns: Result<Vec<BoundaryField>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut e = BoundaryField::zeros(grid);
            e.0[j] = 1.0;
            let u = dirichlet_solve(op, &zero, &e)?;
            normal_flux(grid, &u, &op.d)
        })
        .collect();
    let columns = columns?;
    Ok(BoundaryMatrix::from_fn(m, m, |i, j| columns[j].values()[i]))
}

/// 2×2 DtN block of the interval problem with extra zeroth-order term
/// `d(y) σ`, entries `[bottom/top response][bottom/top data]`.
fn mode_block(line: &Arc<Grid>, d: &DomainField, lambda: f64, sigma: f64) -> Result<[[f64; 2]; 2]> {
    let shift: Vec<f64> = d.values().iter().map(|v| v * sigma).collect();
    let op = assemble_shifted(line, d, lambda, (sigma != 0.0).then_some(&shift[..]))?;
    let dtn = assemble_dtn_direct(&op)?;
    Ok([[dtn[(0, 0)], dtn[(0, 1)]], [dtn[(1, 0)], dtn[(1, 1)]]])
}

fn assemble_dtn_fourier(op: &SparseOperator) -> Result<BoundaryMatrix> {
    let grid = &op.grid;
    let nx = grid.nx();
    let line = Arc::new(build_grid(grid.spec.reduced())?);
    let d_line = DomainField((0..=grid.ny()).map(|j| op.d.values()[j * nx]).collect());
    let theta = |k: usize| 2.0 * std::f64::consts::PI * k as f64 / nx as f64;
    let ihx2 = 1.0 / (grid.hx * grid.hx);
    let blocks: Result<Vec<[[f64; 2]; 2]>> = (0..=nx / 2)
        .into_par_iter()
        .map(|k| {
            // symbol of the periodic second difference: (2 - 2cos θ)/hx²
            let sigma = if k == 0 { 0.0 } else { (2.0 - 2.0 * theta(k).cos()) * ihx2 };
            mode_block(&line, &d_line, op.lambda, sigma)
        })
        .collect();
    let blocks = blocks?;
    let m = 2 * nx;
    let inv = 1.0 / nx as f64;
    // circulant blocks: N[(s,i),(t,j)] = (1/nx) Σ_k B_k[s][t] cos(θ_k (i - j))
    let kernel: Vec<[[f64; 2]; 2]> = (0..nx)
        .map(|diff| {
            let mut acc = [[0.0; 2]; 2];
            for k in 0..nx {
                let b = &blocks[k.min(nx - k)];
                let c = (theta(k) * diff as f64).cos();
                for s in 0..2 {
                    for t in 0..2 {
                        acc[s][t] += b[s][t] * c;
                    }
                }
            }
            acc.map(|row| row.map(|v| v * inv))
        })
        .collect();
    Ok(BoundaryMatrix::from_fn(m, m, |r, c| {
        let (s, i) = (r / nx, r % nx);
        let (t, j) = (c / nx, c % nx);
        kernel[(i + nx - j) % nx][s][t]
    }))
}
