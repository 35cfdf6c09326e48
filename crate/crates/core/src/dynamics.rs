//! Time integration of the reduced boundary equation
//!
//! ```text
//! ∂_t u_Γ + C u_Γ + b N_λ u_Γ = g(u_Γ) - b d∂_ν R_λ(f(D_λ(u_Γ)), 0)
//! ```
//!
//! with a semi-implicit Euler step: the stiff linear part `C + diag(b) N_λ`
//! is implicit, `g` and the interior flux correction are explicit. After
//! each step the interior field is refreshed with `D_λ`, so the elliptic
//! constraint holds at every accepted state.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::EnergyFunctional;
use crate::elliptic::{
    assemble_dtn, assemble_interior, dirichlet_solve, nonlinear_dirichlet_solve_from, SparseOperator,
    CONTRACTION_FACTOR,
};
use crate::error::{Error, Result};
use crate::grid::{
    build_grid, normal_flux, surface_laplacian_matrix, BoundaryField, BoundaryMatrix, BoundarySide,
    DomainField, GeometryKind, GeometrySpec, Grid,
};
use crate::nonlinearity::{DiffusivitySpec, FunctionSpec, Role};

/// Steps whose relative sup-norm increment exceeds this are retried at half size.
pub const MAX_RELATIVE_INCREMENT: f64 = 0.1;
pub const GROWTH_FACTOR: f64 = 1.2;
/// Accepted steps between step-size increases.
pub const GROWTH_INTERVAL: usize = 5;
const INCREMENT_FLOOR: f64 = 1e-8;
const TAIL_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainCoefficient {
    Constant(f64),
    Field(DomainField),
}

impl DomainCoefficient {
    pub fn resolve(&self, grid: &Grid) -> Result<DomainField> {
        match self {
            DomainCoefficient::Constant(c) => Ok(DomainField::constant(grid, *c)),
            DomainCoefficient::Field(f) => DomainField::from_values(grid, f.values().to_vec()),
        }
    }

    fn is_x_invariant(&self, grid: &Grid) -> bool {
        match self {
            DomainCoefficient::Constant(_) => true,
            DomainCoefficient::Field(f) => (0..=grid.ny()).all(|j| {
                let row = &f.values()[j * grid.nx()..(j + 1) * grid.nx()];
                row.iter().all(|&v| v == row[0])
            }),
        }
    }

    fn reduced(&self, grid: &Grid) -> Self {
        match self {
            DomainCoefficient::Constant(c) => DomainCoefficient::Constant(*c),
            DomainCoefficient::Field(f) => DomainCoefficient::Field(DomainField(
                (0..=grid.ny()).map(|j| f.values()[j * grid.nx()]).collect(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCoefficient {
    Constant(f64),
    Field(BoundaryField),
}

impl BoundaryCoefficient {
    pub fn resolve(&self, grid: &Grid) -> Result<BoundaryField> {
        match self {
            BoundaryCoefficient::Constant(c) => Ok(BoundaryField::constant(grid, *c)),
            BoundaryCoefficient::Field(f) => BoundaryField::from_values(grid, f.values().to_vec()),
        }
    }
}

fn per_circle_constant(grid: &Grid, field: &BoundaryField) -> Option<(f64, f64)> {
    let nx = grid.nx();
    let (bot, top) = field.values().split_at(nx);
    if bot.iter().all(|&v| v == bot[0]) && top.iter().all(|&v| v == top[0]) {
        Some((bot[0], top[0]))
    } else {
        None
    }
}

/// Initial boundary data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialSpec {
    /// `side value + amplitude * cos(2π mode x / L)`; on the interval the
    /// cosine is evaluated at `x = 0`.
    Profile {
        bottom: f64,
        top: f64,
        amplitude: f64,
        mode: u32,
    },
    Field(BoundaryField),
}

impl InitialSpec {
    pub fn constant(c: f64) -> Self {
        InitialSpec::Profile {
            bottom: c,
            top: c,
            amplitude: 0.0,
            mode: 0,
        }
    }

    pub fn resolve(&self, grid: &Grid) -> Result<BoundaryField> {
        match self {
            InitialSpec::Profile {
                bottom,
                top,
                amplitude,
                mode,
            } => {
                let period = grid.spec.length;
                Ok(BoundaryField::from_fn(grid, |x, side| {
                    let base = match side {
                        BoundarySide::Bottom => *bottom,
                        BoundarySide::Top => *top,
                    };
                    base + amplitude * (2.0 * PI * *mode as f64 * x / period).cos()
                }))
            }
            InitialSpec::Field(f) => BoundaryField::from_values(grid, f.values().to_vec()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub fixed_point_tol: f64,
    pub max_picard: usize,
    pub blowup_threshold: f64,
    pub t_end: f64,
    /// Record every `output_stride`-th accepted step.
    pub output_stride: usize,
    /// With `false` every step uses `dt0` and the increment control is off.
    pub adaptive: bool,
    /// Keep the interior field in every recorded sample.
    pub record_domain: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt0: 1e-3,
            dt_min: 1e-12,
            dt_max: 0.05,
            fixed_point_tol: 1e-10,
            max_picard: 200,
            blowup_threshold: 1e8,
            t_end: 10.0,
            output_stride: 1,
            adaptive: true,
            record_domain: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: GeometrySpec,
    pub lambda: f64,
    pub d: DomainCoefficient,
    pub delta: DiffusivitySpec,
    /// Coupling scale `b` in `B(u) = b d∂_ν u`; no sign restriction.
    pub b: BoundaryCoefficient,
    pub f: FunctionSpec,
    pub g: FunctionSpec,
    pub u0: InitialSpec,
    pub solver: SolverConfig,
}

impl Scenario {
    /// `d ≡ 1`, `b ≡ 1`, no surface diffusion, `f = g = 0`, `u0 ≡ 0`.
    pub fn new(geometry: GeometrySpec, lambda: f64) -> Self {
        Self {
            geometry,
            lambda,
            d: DomainCoefficient::Constant(1.0),
            delta: DiffusivitySpec::ZeroSurface,
            b: BoundaryCoefficient::Constant(1.0),
            f: FunctionSpec::zero(Role::InteriorF),
            g: FunctionSpec::zero(Role::BoundaryG),
            u0: InitialSpec::constant(0.0),
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::NonPositiveLambda(self.lambda));
        }
        self.delta.validate()?;
        if self.f.role != Role::InteriorF {
            return bad("f must carry the interior role".into());
        }
        if self.g.role != Role::BoundaryG {
            return bad("g must carry the boundary role".into());
        }
        self.f.validate()?;
        self.g.validate()?;
        let s = &self.solver;
        if !(s.dt_min > 0.0 && s.dt_min < s.dt0 && s.dt0 <= s.dt_max) {
            return bad(format!(
                "time steps must satisfy 0 < dt_min < dt0 <= dt_max (got {}, {}, {})",
                s.dt_min, s.dt0, s.dt_max
            ));
        }
        if !(s.t_end > 0.0) || !s.t_end.is_finite() {
            return bad(format!("t_end must be positive, got {}", s.t_end));
        }
        if !(s.fixed_point_tol > 0.0) || s.max_picard == 0 {
            return bad("fixed_point_tol and max_picard must be positive".into());
        }
        if s.output_stride == 0 {
            return bad("output_stride must be at least 1".into());
        }
        let u0 = self.u0.resolve(grid)?;
        u0.ensure_finite()?;
        if !(s.blowup_threshold > u0.max_abs()) {
            return bad(format!(
                "blowup_threshold {} must exceed |u0|_inf = {}",
                s.blowup_threshold,
                u0.max_abs()
            ));
        }
        let b = self.b.resolve(grid)?;
        b.ensure_finite()?;
        let d = self.d.resolve(grid)?;
        d.ensure_finite()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunWarning {
    /// Reactive boundary (δ = 0) with a sign-reversed coupling scale.
    Stability { message: String },
    /// Surface diffusion has no meaning on the zero-dimensional interval boundary.
    SurfaceDiffusionIgnored,
    /// `λ` below the empirical contraction surrogate `4 Lip(f)`.
    ContractionSurrogate { lambda: f64, bound: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u_gamma: BoundaryField,
    pub u: DomainField,
    pub dt: f64,
    pub step_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TerminationStatus {
    Completed,
    BlowUp {
        t_estimate: f64,
        /// Trailing `(t, |u_Γ|_∞)` pairs of accepted steps.
        norm_history_tail: Vec<(f64, f64)>,
    },
    NonContraction {
        t: f64,
    },
    Faulted {
        reason: String,
    },
}

impl TerminationStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TerminationStatus::Completed => "Completed",
            TerminationStatus::BlowUp { .. } => "BlowUp",
            TerminationStatus::NonContraction { .. } => "NonContraction",
            TerminationStatus::Faulted { .. } => "Faulted",
        }
    }

    pub fn blowup_time(&self) -> Option<f64> {
        match self {
            TerminationStatus::BlowUp { t_estimate, .. } => Some(*t_estimate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// Step size that produced this sample (0 for the initial state).
    pub dt: f64,
    pub step: usize,
    pub u_gamma: BoundaryField,
    pub u: Option<DomainField>,
    pub energy: Option<f64>,
    pub boundary_l2: f64,
    pub boundary_linf: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Boundary state at time `t` by linear interpolation between samples.
    pub fn boundary_at(&self, t: f64) -> Option<BoundaryField> {
        let s = &self.samples;
        if s.is_empty() || t < s[0].t || t > s[s.len() - 1].t {
            return None;
        }
        let k = s.partition_point(|x| x.t < t);
        if k < s.len() && s[k].t == t {
            return Some(s[k].u_gamma.clone());
        }
        let (a, b) = (&s[k - 1], &s[k]);
        let w = (t - a.t) / (b.t - a.t);
        Some(BoundaryField(
            a.u_gamma
                .values()
                .iter()
                .zip(b.u_gamma.values())
                .map(|(p, q)| (1.0 - w) * p + w * q)
                .collect(),
        ))
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub trajectory: Trajectory,
    pub status: TerminationStatus,
    pub warnings: Vec<RunWarning>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl RunReport {
    pub fn has_stability_warning(&self) -> bool {
        self.warnings
            .iter()
            .any(|w| matches!(w, RunWarning::Stability { .. }))
    }
}

/// A scenario with its grid and the operators that stay fixed during a run.
#[derive(Debug)]
pub struct Problem {
    scenario: Scenario,
    grid: Arc<Grid>,
    d: DomainField,
    b: BoundaryField,
    op: SparseOperator,
    dtn: BoundaryMatrix,
    /// `C = -div_Γ(δ∇_Γ ·)` for state-independent δ.
    surface: Option<BoundaryMatrix>,
    energy: EnergyFunctional,
    warnings: Vec<RunWarning>,
}

struct StepCache {
    dt: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Problem {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let grid = Arc::new(build_grid(scenario.geometry)?);
        scenario.validate(&grid)?;
        let d = scenario.d.resolve(&grid)?;
        let b = scenario.b.resolve(&grid)?;
        let op = assemble_interior(&grid, &d, scenario.lambda)?;
        let dtn = assemble_dtn(&op)?;

        let mut warnings = Vec::new();
        if grid.is_interval() && !scenario.delta.is_zero() {
            warn!("surface diffusion is ignored on the interval (zero-dimensional boundary)");
            warnings.push(RunWarning::SurfaceDiffusionIgnored);
        }
        if scenario.delta.is_zero() && b.values().iter().any(|&v| v < 0.0) {
            let message = "reactive boundary (delta = 0) with negative coupling scale b; \
                           well-posedness is not covered in this regime"
                .to_string();
            warn!("{message}");
            warnings.push(RunWarning::Stability { message });
        }
        if let Some(lip) = scenario.f.lipschitz_bound() {
            if scenario.lambda < CONTRACTION_FACTOR * lip {
                warnings.push(RunWarning::ContractionSurrogate {
                    lambda: scenario.lambda,
                    bound: CONTRACTION_FACTOR * lip,
                });
            }
        }

        let surface = match scenario.delta {
            DiffusivitySpec::Constant { delta0 } if !grid.is_interval() => {
                Some(-surface_laplacian_matrix(&grid, &BoundaryField::constant(&grid, delta0))?)
            }
            _ => None,
        };
        let energy = EnergyFunctional::new(
            Arc::clone(&grid),
            d.clone(),
            scenario.lambda,
            scenario.delta,
            scenario.f,
            scenario.g,
        )?;
        Ok(Self {
            scenario,
            grid,
            d,
            b,
            op,
            dtn,
            surface,
            energy,
            warnings,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.op
    }

    pub fn dtn(&self) -> &BoundaryMatrix {
        &self.dtn
    }

    pub fn diffusivity(&self) -> &DomainField {
        &self.d
    }

    pub fn coupling_scale(&self) -> &BoundaryField {
        &self.b
    }

    pub fn energy_functional(&self) -> &EnergyFunctional {
        &self.energy
    }

    pub fn warnings(&self) -> &[RunWarning] {
        &self.warnings
    }

    /// `C` at the given boundary state; `None` when there is no surface diffusion.
    pub fn surface_operator(&self, u_gamma: &BoundaryField) -> Result<Option<BoundaryMatrix>> {
        if self.grid.is_interval() {
            return Ok(None);
        }
        match self.scenario.delta {
            DiffusivitySpec::ZeroSurface => Ok(None),
            DiffusivitySpec::Constant { .. } => Ok(self.surface.clone()),
            DiffusivitySpec::Quasilinear { .. } => {
                let delta = u_gamma.map(|s| self.scenario.delta.eval(s));
                Ok(Some(-surface_laplacian_matrix(&self.grid, &delta)?))
            }
        }
    }

    /// `D_λ(u_Γ)`, warm-started from `guess`.
    pub fn extend(&self, u_gamma: &BoundaryField, guess: Option<&DomainField>) -> Result<DomainField> {
        let s = &self.scenario.solver;
        nonlinear_dirichlet_solve_from(&self.op, &self.scenario.f, u_gamma, guess, s.fixed_point_tol, s.max_picard)
            .map(|(u, _)| u)
    }

    pub fn initial_state(&self) -> Result<SimState> {
        let u_gamma = self.scenario.u0.resolve(&self.grid)?;
        let u = self.extend(&u_gamma, None)?;
        Ok(SimState {
            t: 0.0,
            u_gamma,
            u,
            dt: self.scenario.solver.dt0,
            step_count: 0,
        })
    }

    /// `|u - R_λ(f(u), u_Γ)|_∞` for the given state.
    pub fn constraint_residual(&self, state: &SimState) -> Result<f64> {
        let f = &self.scenario.f;
        let r = dirichlet_solve(&self.op, &state.u.map(|s| f.eval(s)), &state.u_gamma)?;
        Ok(r.values()
            .iter()
            .zip(state.u.values())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    fn implicit_matrix(&self, dt: f64, surface: Option<&BoundaryMatrix>) -> DMatrix<f64> {
        let m = self.grid.boundary_count();
        let bv = self.b.values();
        let mut mat = DMatrix::from_fn(m, m, |i, j| dt * bv[i] * self.dtn[(i, j)]);
        if let Some(c) = surface {
            mat += dt * c;
        }
        for i in 0..m {
            mat[(i, i)] += 1.0;
        }
        mat
    }

    fn explicit_rhs(&self, state: &SimState, dt: f64) -> Result<DVector<f64>> {
        let g = &self.scenario.g;
        let f = &self.scenario.f;
        let correction = if f.is_zero() {
            None
        } else {
            let w = dirichlet_solve(&self.op, &state.u.map(|s| f.eval(s)), &BoundaryField::zeros(&self.grid))?;
            Some(normal_flux(&self.grid, &w, &self.d)?)
        };
        let ug = state.u_gamma.values();
        let bv = self.b.values();
        Ok(DVector::from_fn(ug.len(), |k, _| {
            let corr = correction.as_ref().map_or(0.0, |c| bv[k] * c.values()[k]);
            ug[k] + dt * (g.eval(ug[k]) - corr)
        }))
    }

    fn step_cached(&self, cache: &mut Option<StepCache>, state: &SimState, dt: f64) -> Result<SimState> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidStep(dt));
        }
        let rhs = self.explicit_rhs(state, dt)?;
        let next = if self.scenario.delta.depends_on_state() && !self.grid.is_interval() {
            let c = self.surface_operator(&state.u_gamma)?;
            self.implicit_matrix(dt, c.as_ref()).lu().solve(&rhs)
        } else {
            if cache.as_ref().is_none_or(|c| c.dt != dt) {
                let lu = self.implicit_matrix(dt, self.surface.as_ref()).lu();
                *cache = Some(StepCache { dt, lu });
            }
            cache.as_ref().unwrap().lu.solve(&rhs)
        };
        let next = next.ok_or_else(|| Error::SolveFailure("singular implicit boundary matrix".into()))?;
        let u_gamma = BoundaryField(next.iter().copied().collect());
        u_gamma.ensure_finite()?;
        let u = self.extend(&u_gamma, Some(&state.u))?;
        Ok(SimState {
            t: state.t + dt,
            u_gamma,
            u,
            dt,
            step_count: state.step_count + 1,
        })
    }

    /// One semi-implicit Euler step of size `dt`.
    pub fn step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        self.step_cached(&mut None, state, dt)
    }

    fn sample(&self, state: &SimState) -> Sample {
        let ug = state.u_gamma.values();
        Sample {
            t: state.t,
            dt: if state.step_count == 0 { 0.0 } else { state.dt },
            step: state.step_count,
            u_gamma: state.u_gamma.clone(),
            u: self.scenario.solver.record_domain.then(|| state.u.clone()),
            energy: self.energy.evaluate(&state.u).ok().flatten(),
            boundary_l2: self.grid.boundary_l2(ug),
            boundary_linf: state.u_gamma.max_abs(),
        }
    }

    /// Integrate to `t_end`, blow-up, or fault. Math faults end the run with
    /// a status; they never panic.
    pub fn run(&self) -> RunReport {
        let mut report = RunReport {
            trajectory: Trajectory::default(),
            status: TerminationStatus::Completed,
            warnings: self.warnings.clone(),
            accepted_steps: 0,
            rejected_steps: 0,
        };
        let mut state = match self.initial_state() {
            Ok(s) => s,
            Err(Error::NonContraction { .. }) => {
                report.status = TerminationStatus::NonContraction { t: 0.0 };
                return report;
            }
            Err(e) => {
                report.status = TerminationStatus::Faulted { reason: e.to_string() };
                return report;
            }
        };
        let cfg = self.scenario.solver;
        report.trajectory.samples.push(self.sample(&state));
        let mut tail: VecDeque<(f64, f64)> = VecDeque::with_capacity(TAIL_LEN);
        tail.push_back((state.t, state.u_gamma.max_abs()));

        let mut dt = cfg.dt0;
        let mut since_change = 0;
        let mut cache = None;
        let t_end = cfg.t_end;
        let mut last_recorded = true;

        let status = loop {
            if state.t >= t_end * (1.0 - 1e-14) {
                break TerminationStatus::Completed;
            }
            let h = dt.min(t_end - state.t);
            let attempt = self.step_cached(&mut cache, &state, h);
            let retry = match attempt {
                Err(Error::NonContraction { .. }) => {
                    if !cfg.adaptive {
                        break TerminationStatus::NonContraction { t: state.t };
                    }
                    Some(None)
                }
                Err(Error::NonFinite { .. }) if cfg.adaptive => Some(None),
                Err(e) => break TerminationStatus::Faulted { reason: e.to_string() },
                Ok(next) => {
                    let denom = state.u_gamma.max_abs().max(INCREMENT_FLOOR);
                    let incr = next
                        .u_gamma
                        .values()
                        .iter()
                        .zip(state.u_gamma.values())
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    if cfg.adaptive && incr / denom > MAX_RELATIVE_INCREMENT {
                        Some(Some(()))
                    } else {
                        if !next.u.values().iter().all(|v| v.is_finite()) {
                            break TerminationStatus::Faulted {
                                reason: "non-finite interior field".into(),
                            };
                        }
                        state = next;
                        None
                    }
                }
            };
            if let Some(kind) = retry {
                report.rejected_steps += 1;
                dt *= 0.5;
                since_change = 0;
                if dt < cfg.dt_min {
                    break match kind {
                        None if !superlinear(&tail) => TerminationStatus::NonContraction { t: state.t },
                        _ if superlinear(&tail) => TerminationStatus::BlowUp {
                            t_estimate: blowup_estimate(&tail),
                            norm_history_tail: tail.iter().copied().collect(),
                        },
                        _ => TerminationStatus::Faulted {
                            reason: format!("step size collapsed below dt_min at t = {}", state.t),
                        },
                    };
                }
                continue;
            }

            report.accepted_steps += 1;
            if tail.len() == TAIL_LEN {
                tail.pop_front();
            }
            let linf = state.u_gamma.max_abs();
            tail.push_back((state.t, linf));
            last_recorded = false;
            if report.accepted_steps.is_multiple_of(cfg.output_stride) {
                report.trajectory.samples.push(self.sample(&state));
                last_recorded = true;
            }
            if linf > cfg.blowup_threshold {
                break TerminationStatus::BlowUp {
                    t_estimate: blowup_estimate(&tail),
                    norm_history_tail: tail.iter().copied().collect(),
                };
            }
            if cfg.adaptive {
                since_change += 1;
                if since_change >= GROWTH_INTERVAL {
                    dt = (dt * GROWTH_FACTOR).min(cfg.dt_max);
                    since_change = 0;
                }
            }
        };
        if !last_recorded {
            report.trajectory.samples.push(self.sample(&state));
        }
        report.status = status;
        report
    }
}

/// Accelerating growth of the sup norm over the last three accepted steps.
fn superlinear(tail: &VecDeque<(f64, f64)>) -> bool {
    let n = tail.len();
    if n < 3 {
        return false;
    }
    let (t1, m1) = tail[n - 3];
    let (t2, m2) = tail[n - 2];
    let (t3, m3) = tail[n - 1];
    let s1 = (m2 - m1) / (t2 - t1);
    let s2 = (m3 - m2) / (t3 - t2);
    s1 > 0.0 && s2 > s1
}

/// Zero crossing of the least-squares line through `1/|u_Γ|_∞` at the last
/// three accepted steps, never earlier than the last accepted time.
pub fn blowup_estimate(tail: &VecDeque<(f64, f64)>) -> f64 {
    let n = tail.len();
    let last_t = tail.back().map_or(0.0, |p| p.0);
    if n < 2 {
        return last_t;
    }
    let pts: Vec<(f64, f64)> = tail.iter().skip(n.saturating_sub(3)).map(|&(t, m)| (t, 1.0 / m)).collect();
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let mr = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mr)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if !(sxx > 0.0) {
        return last_t;
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return last_t;
    }
    let intercept = mr - slope * mt;
    (-intercept / slope).max(last_t)
}

/// Build, validate and run a scenario.
pub fn run(scenario: Scenario) -> Result<RunReport> {
    Ok(Problem::new(scenario)?.run())
}

#[derive(Debug, Clone)]
pub struct ReductionReport {
    pub max_deviation: f64,
    pub samples_compared: usize,
    /// Upper time limit of the comparison (0.9 × blow-up estimate for blow-up runs).
    pub horizon: f64,
    pub strip: RunReport,
    pub interval: RunReport,
}

/// Run an x-invariant strip scenario next to the matching interval scenario
/// and report the largest sup-norm deviation of the boundary traces.
pub fn dimensional_reduction_check(strip: &Scenario) -> Result<ReductionReport> {
    if strip.geometry.kind != GeometryKind::PeriodicStrip {
        return Err(Error::Precondition("dimensional reduction needs a strip scenario".into()));
    }
    let grid = build_grid(strip.geometry)?;
    let u0 = strip.u0.resolve(&grid)?;
    let (u_bot, u_top) = per_circle_constant(&grid, &u0)
        .ok_or_else(|| Error::Precondition("initial data is not x-invariant".into()))?;
    if !strip.d.is_x_invariant(&grid) {
        return Err(Error::Precondition("diffusivity d is not x-invariant".into()));
    }
    let b_reduced = match &strip.b {
        BoundaryCoefficient::Constant(c) => BoundaryCoefficient::Constant(*c),
        BoundaryCoefficient::Field(f) => {
            let (p, q) = per_circle_constant(&grid, f)
                .ok_or_else(|| Error::Precondition("coupling scale b is not x-invariant".into()))?;
            BoundaryCoefficient::Field(BoundaryField(vec![p, q]))
        }
    };
    let interval = Scenario {
        geometry: strip.geometry.reduced(),
        d: strip.d.reduced(&grid),
        b: b_reduced,
        u0: InitialSpec::Profile {
            bottom: u_bot,
            top: u_top,
            amplitude: 0.0,
            mode: 0,
        },
        ..strip.clone()
    };
    let strip_run = run(strip.clone())?;
    let interval_run = run(interval)?;

    let horizon = match strip_run.status.blowup_time() {
        Some(t) => 0.9 * t,
        None => f64::INFINITY,
    };
    let nx = grid.nx();
    let mut max_deviation: f64 = 0.0;
    let mut compared = 0;
    for s in strip_run.trajectory.samples.iter().filter(|s| s.t <= horizon) {
        let reference = match interval_run.trajectory.boundary_at(s.t) {
            Some(r) => r,
            None => continue,
        };
        for (k, &v) in s.u_gamma.values().iter().enumerate() {
            let side = usize::from(k >= nx);
            max_deviation = max_deviation.max((v - reference.values()[side]).abs());
        }
        compared += 1;
    }
    Ok(ReductionReport {
        max_deviation,
        samples_compared: compared,
        horizon,
        strip: strip_run,
        interval: interval_run,
    })
}
