//! The boundary eigenproblem
//!
//! ```text
//! (λ - c̃_f) φ - div(d ∇φ) = 0           in Ω
//! -div_Γ(δ ∇_Γ φ) + d ∂_ν φ - c_g φ = ξ φ   on Γ
//! ```
//!
//! reduced to the boundary matrix `S = C_δ + N_{λ-c̃_f} - c_g I` and solved densely.

use std::sync::Arc;

use nalgebra::{DVector, SymmetricEigen};
use serde::Serialize;

use crate::elliptic::{assemble_dtn, assemble_interior, dirichlet_solve, SparseOperator};
use crate::error::{Error, Result};
use crate::grid::{surface_laplacian_matrix, BoundaryField, BoundaryMatrix, DomainField, Grid};

#[derive(Debug, Clone)]
pub struct StekloffProblem {
    pub grid: Arc<Grid>,
    pub lambda: f64,
    pub c_f_tilde: f64,
    pub c_g: f64,
    /// Symmetric part of the assembled boundary matrix.
    pub matrix: BoundaryMatrix,
    /// `max |S - Sᵀ|` before symmetrization.
    pub asymmetry: f64,
    op: SparseOperator,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub xi1: f64,
    /// The lowest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvector of `xi1` with unit boundary L² norm.
    pub eigenvector: BoundaryField,
    pub positive: bool,
}

/// Assemble `S` for pointwise surface diffusivity `delta` (zero for the
/// reactive case).
pub fn assemble_stekloff(
    grid: &Arc<Grid>,
    d: &DomainField,
    lambda: f64,
    delta: &BoundaryField,
    c_f_tilde: f64,
    c_g: f64,
) -> Result<StekloffProblem> {
    let shifted = lambda - c_f_tilde;
    if !(shifted > 0.0) {
        return Err(Error::ShiftViolation { lambda, c_f_tilde });
    }
    if !c_g.is_finite() {
        return Err(Error::Precondition(format!("c_g must be finite, got {c_g}")));
    }
    let op = assemble_interior(grid, d, shifted)?;
    let raw = assemble_dtn(&op)? - surface_laplacian_matrix(grid, delta)?;
    let asymmetry = (&raw - raw.transpose()).amax();
    let mut matrix = (&raw + raw.transpose()) * 0.5;
    for i in 0..matrix.nrows() {
        matrix[(i, i)] -= c_g;
    }
    Ok(StekloffProblem {
        grid: Arc::clone(grid),
        lambda,
        c_f_tilde,
        c_g,
        matrix,
        asymmetry,
        op,
    })
}

impl StekloffProblem {
    pub fn shifted_operator(&self) -> &SparseOperator {
        &self.op
    }

    /// The `(λ - c̃_f)`-harmonic extension of boundary data.
    pub fn extend(&self, psi: &BoundaryField) -> Result<DomainField> {
        dirichlet_solve(&self.op, &DomainField::zeros(&self.grid), psi)
    }

    /// Rayleigh quotient of a trial field. The field splits as its harmonic
    /// extension plus a remainder vanishing on Γ; the extension contributes
    /// the boundary form of `S`, the remainder its (nonnegative) interior
    /// energy. Eigenvectors extended harmonically give their eigenvalue exactly.
    pub fn rayleigh_quotient(&self, psi: &DomainField) -> Result<f64> {
        let grid = &self.grid;
        let trace = grid.trace(psi)?;
        let denom = grid.boundary_dot(trace.values(), trace.values());
        if !(denom > 0.0) {
            return Err(Error::ZeroTrace);
        }
        let h = self.extend(&trace)?;
        let z = DomainField(psi.values().iter().zip(h.values()).map(|(a, b)| a - b).collect());
        let az = self.op.apply(&z)?;
        let weights = grid.domain_weights();
        let interior: f64 = grid
            .interior_indices()
            .iter()
            .zip(&az)
            .map(|(&n, a)| weights[n] * z.values()[n] * a)
            .sum();
        let v = DVector::from_column_slice(trace.values());
        let s_form = v.dot(&(&self.matrix * &v));
        // uniform boundary weights: ⟨ψ, Sψ⟩_w = w ψᵀSψ
        let w = grid.boundary_weights()[0];
        Ok((w * s_form + interior) / denom)
    }
}

/// The `m` lowest eigenpairs of `S` (all of them if `m` exceeds the dimension).
pub fn smallest_eigenvalue(problem: &StekloffProblem, m: usize) -> Result<SpectralReport> {
    let n = problem.matrix.nrows();
    let eig = SymmetricEigen::try_new(problem.matrix.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenFailure("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    let eigenvalues: Vec<f64> = order.iter().take(m.max(1)).map(|&k| eig.eigenvalues[k]).collect();
    let col: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    let norm = problem.grid.boundary_l2(&col);
    // fix the sign so the largest entry is positive
    let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    let scale = pivot.signum() / norm;
    let xi1 = eigenvalues[0];
    Ok(SpectralReport {
        xi1,
        eigenvalues,
        eigenvector: BoundaryField(col.iter().map(|v| v * scale).collect()),
        positive: xi1 > 0.0,
    })
}

/// Rayleigh quotient for a one-off evaluation; assembles the problem first.
pub fn rayleigh_quotient(
    grid: &Arc<Grid>,
    d: &DomainField,
    lambda: f64,
    delta: &BoundaryField,
    c_f_tilde: f64,
    c_g: f64,
    psi: &DomainField,
) -> Result<f64> {
    assemble_stekloff(grid, d, lambda, delta, c_f_tilde, c_g)?.rayleigh_quotient(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GeometrySpec};
    use std::f64::consts::PI;

    fn setup(spec: GeometrySpec) -> (Arc<Grid>, DomainField, BoundaryField) {
        let g = Arc::new(build_grid(spec).unwrap());
        let d = DomainField::constant(&g, 1.0);
        let delta = BoundaryField::zeros(&g);
        (g, d, delta)
    }

    #[test]
    fn interval_pair() {
        let (g, d, z) = setup(GeometrySpec::interval(256));
        let p = assemble_stekloff(&g, &d, 1.0, &z, 0.0, 0.0).unwrap();
        let r = smallest_eigenvalue(&p, 2).unwrap();
        assert!((r.eigenvalues[0] - 0.5f64.tanh()).abs() < 1e-3);
        assert!((r.eigenvalues[1] - 1.0 / 0.5f64.tanh()).abs() < 1e-3);
        assert!(r.positive);
        assert!((g.boundary_l2(r.eigenvector.values()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_guard_and_zero_trace() {
        let (g, d, z) = setup(GeometrySpec::interval(8));
        assert!(matches!(
            assemble_stekloff(&g, &d, 1.0, &z, 1.0, 0.0),
            Err(Error::ShiftViolation { .. })
        ));
        let p = assemble_stekloff(&g, &d, 1.0, &z, 0.0, 0.0).unwrap();
        let psi = DomainField::from_fn(&g, |_, y| y * (1.0 - y));
        assert_eq!(p.rayleigh_quotient(&psi), Err(Error::ZeroTrace));
    }

    #[test]
    fn identity_shift_and_sign_flip() {
        let (g, d, z) = setup(GeometrySpec::strip(2.0 * PI, 16, 32));
        let base = smallest_eigenvalue(&assemble_stekloff(&g, &d, 1.0, &z, 0.0, 0.0).unwrap(), 32).unwrap();
        let shifted = smallest_eigenvalue(&assemble_stekloff(&g, &d, 1.0, &z, 0.0, 0.1).unwrap(), 32).unwrap();
        for (a, b) in base.eigenvalues.iter().zip(&shifted.eigenvalues) {
            assert!((a - 0.1 - b).abs() < 1e-9);
        }
        let big = smallest_eigenvalue(&assemble_stekloff(&g, &d, 1.0, &z, 0.0, 1.0).unwrap(), 1).unwrap();
        assert!(!big.positive);
    }

    #[test]
    fn surface_diffusion_leaves_first_mode() {
        let (g, d, z) = setup(GeometrySpec::strip(2.0 * PI, 16, 64));
        let one = BoundaryField::constant(&g, 1.0);
        let a = smallest_eigenvalue(&assemble_stekloff(&g, &d, 1.0, &z, 0.0, 0.0).unwrap(), 1).unwrap();
        let b = smallest_eigenvalue(&assemble_stekloff(&g, &d, 1.0, &one, 0.0, 0.0).unwrap(), 1).unwrap();
        assert!((a.xi1 - b.xi1).abs() < 1e-9);
    }

    #[test]
    fn constant_trial_field() {
        let (g, d, z) = setup(GeometrySpec::strip(2.0 * PI, 8, 128));
        let q = rayleigh_quotient(&g, &d, 1.0, &z, 0.0, 0.0, &DomainField::constant(&g, 1.0)).unwrap();
        assert!((q - 0.5).abs() < 1e-4, "{q}");
    }

    #[test]
    fn eigenvector_quotient() {
        let (g, d, z) = setup(GeometrySpec::strip(2.0 * PI, 16, 32));
        let p = assemble_stekloff(&g, &d, 2.0, &z, 0.5, 0.2).unwrap();
        let r = smallest_eigenvalue(&p, 1).unwrap();
        let psi = p.extend(&r.eigenvector).unwrap();
        assert!((p.rayleigh_quotient(&psi).unwrap() - r.xi1).abs() < 1e-6);
        assert!(p.asymmetry < 1e-9);
    }
}
