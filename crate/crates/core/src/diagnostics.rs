//! Post-processing of trajectories: the Lyapunov energy and its dissipation,
//! Moser norm chains, scalar blow-up times, subsolution domination and
//! convergence-to-equilibrium fits.

use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::{Problem, SimState, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{BoundaryField, DomainField, Grid};
use crate::nonlinearity::{DiffusivitySpec, Family, FunctionSpec, Role};

/// ```text
/// E(u) = ½∫_Ω d|∇u|² + ½∫_Γ δ|∇_Γ u|² - ∫_Ω (F(u) - λu²/2) - ∫_Γ G(u)
/// ```
///
/// Interior gradients are centered (periodic in x) with one-sided
/// three-point differences in y on Γ; the surface term uses the same edge
/// differences as the discrete surface operator.
#[derive(Debug, Clone)]
pub struct EnergyFunctional {
    grid: Arc<Grid>,
    d: DomainField,
    lambda: f64,
    delta: DiffusivitySpec,
    f: FunctionSpec,
    g: FunctionSpec,
}

impl EnergyFunctional {
    pub fn new(
        grid: Arc<Grid>,
        d: DomainField,
        lambda: f64,
        delta: DiffusivitySpec,
        f: FunctionSpec,
        g: FunctionSpec,
    ) -> Result<Self> {
        if d.len() != grid.node_count() {
            return Err(Error::SizeMismatch {
                expected: grid.node_count(),
                actual: d.len(),
            });
        }
        Ok(Self {
            grid,
            d,
            lambda,
            delta,
            f,
            g,
        })
    }

    /// `None` for state-dependent surface diffusivity, where no Lyapunov
    /// functional of this form is available.
    pub fn evaluate(&self, u: &DomainField) -> Result<Option<f64>> {
        if self.delta.depends_on_state() {
            return Ok(None);
        }
        let grid = &self.grid;
        if u.len() != grid.node_count() {
            return Err(Error::SizeMismatch {
                expected: grid.node_count(),
                actual: u.len(),
            });
        }
        let (nx, ny) = (grid.nx(), grid.ny());
        let uv = u.values();
        let at = |i: usize, j: usize| uv[j * nx + i];
        let w = grid.domain_weights();
        let mut bulk = 0.0;
        for j in 0..=ny {
            for i in 0..nx {
                let n = j * nx + i;
                let uy = if j == 0 {
                    (-3.0 * at(i, 0) + 4.0 * at(i, 1) - at(i, 2)) / (2.0 * grid.hy)
                } else if j == ny {
                    (3.0 * at(i, ny) - 4.0 * at(i, ny - 1) + at(i, ny - 2)) / (2.0 * grid.hy)
                } else {
                    (at(i, j + 1) - at(i, j - 1)) / (2.0 * grid.hy)
                };
                let ux = if grid.is_interval() {
                    0.0
                } else {
                    (at((i + 1) % nx, j) - at((i + nx - 1) % nx, j)) / (2.0 * grid.hx)
                };
                let s = uv[n];
                bulk += w[n]
                    * (0.5 * self.d.values()[n] * (ux * ux + uy * uy) - self.f.antiderivative(s)
                        + 0.5 * self.lambda * s * s);
            }
        }
        let mut surface = 0.0;
        let delta0 = self.delta.eval(0.0);
        if delta0 > 0.0 && !grid.is_interval() {
            for j in [0, ny] {
                for i in 0..nx {
                    let du = (at((i + 1) % nx, j) - at(i, j)) / grid.hx;
                    surface += 0.5 * grid.hx * delta0 * du * du;
                }
            }
        }
        let bw = grid.boundary_weights();
        let boundary: f64 = grid
            .boundary_indices()
            .iter()
            .zip(bw)
            .map(|(&n, w)| w * self.g.antiderivative(uv[n]))
            .sum();
        Ok(Some(bulk + surface - boundary))
    }
}

/// Energy of a simulation state; a state off the elliptic constraint is a fault.
pub fn energy(problem: &Problem, state: &SimState) -> Result<Option<f64>> {
    let tol = problem.scenario().solver.fixed_point_tol;
    let residual = problem.constraint_residual(state)?;
    if residual > 10.0 * tol * state.u.max_abs().max(1.0) {
        return Err(Error::Faulted(format!(
            "state violates the elliptic constraint (residual {residual:e})"
        )));
    }
    problem.energy_functional().evaluate(&state.u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySample {
    pub t: f64,
    pub energy: f64,
    /// `‖∂_t u_Γ‖²` by backward difference (0 for the first sample).
    pub boundary_rate_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    pub samples: Vec<EnergySample>,
    /// `(E_{n+1} - E_n)/Δt_n + ‖(u_{n+1} - u_n)/Δt_n‖²` per step.
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
    /// `E` nonincreasing up to a relative slack of 1e-10 per step.
    pub monotone: bool,
}

pub const MONOTONE_SLACK: f64 = 1e-10;

pub fn dissipation_report(grid: &Grid, trajectory: &Trajectory) -> Result<DissipationReport> {
    let s = &trajectory.samples;
    if s.len() < 2 {
        return Err(Error::InsufficientData("need at least two samples".into()));
    }
    let energies = s
        .iter()
        .map(|x| x.energy)
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::Precondition("trajectory has no energy values".into()))?;
    let mut samples = vec![EnergySample {
        t: s[0].t,
        energy: energies[0],
        boundary_rate_sq: 0.0,
    }];
    let mut residuals = Vec::with_capacity(s.len() - 1);
    let mut monotone = true;
    for n in 0..s.len() - 1 {
        let dt = s[n + 1].t - s[n].t;
        let diff: Vec<f64> = s[n + 1]
            .u_gamma
            .values()
            .iter()
            .zip(s[n].u_gamma.values())
            .map(|(a, b)| (a - b) / dt)
            .collect();
        let rate = grid.boundary_dot(&diff, &diff);
        let (e0, e1) = (energies[n], energies[n + 1]);
        residuals.push((e1 - e0) / dt + rate);
        if e1 - e0 > MONOTONE_SLACK * e0.abs().max(e1.abs()) {
            monotone = false;
        }
        samples.push(EnergySample {
            t: s[n + 1].t,
            energy: e1,
            boundary_rate_sq: rate,
        });
    }
    let max_abs_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(DissipationReport {
        samples,
        residuals,
        max_abs_residual,
        monotone,
    })
}

pub const MAX_MOSER_LEVEL: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoserChain {
    pub t: f64,
    /// `‖u_Γ‖_{L^{2^k}(Γ)}` for `k = 0..=k_max`.
    pub norms: Vec<f64>,
    boundary_measure: f64,
}

impl MoserChain {
    /// Norms with respect to the normalized measure `dS/|Γ|`; nondecreasing in `k`.
    pub fn normalized(&self) -> Vec<f64> {
        self.norms
            .iter()
            .enumerate()
            .map(|(k, v)| v / self.boundary_measure.powf(1.0 / (1u64 << k) as f64))
            .collect()
    }
}

pub fn moser_chain(grid: &Grid, t: f64, u_gamma: &BoundaryField, k_max: usize) -> Result<MoserChain> {
    if k_max > MAX_MOSER_LEVEL {
        return Err(Error::Precondition(format!(
            "k_max = {k_max} exceeds {MAX_MOSER_LEVEL}"
        )));
    }
    if u_gamma.len() != grid.boundary_count() {
        return Err(Error::SizeMismatch {
            expected: grid.boundary_count(),
            actual: u_gamma.len(),
        });
    }
    let top = u_gamma.max_abs();
    if !top.is_finite() {
        return Err(Error::Faulted("non-finite boundary values".into()));
    }
    let w = grid.boundary_weights();
    let norms = (0..=k_max)
        .map(|k| {
            if top == 0.0 {
                return Ok(0.0);
            }
            let p = (1u64 << k) as f64;
            // factor out the sup norm so the powers stay in [0, 1]
            let sum: f64 = u_gamma
                .values()
                .iter()
                .zip(w)
                .map(|(v, w)| w * (v.abs() / top).powf(p))
                .sum();
            let norm = top * sum.powf(1.0 / p);
            if norm.is_finite() {
                Ok(norm)
            } else {
                Err(Error::Faulted(format!("overflow in the L^{p} norm")))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MoserChain {
        t,
        norms,
        boundary_measure: grid.boundary_measure(),
    })
}

fn superlinear_at_infinity(g: &FunctionSpec) -> bool {
    match g.family {
        Family::PowerLaw { rho, q } | Family::DampedPower { rho, q, .. } => rho > 0.0 && q > 1.0,
        Family::Bistable { a } => a < 0.0,
        _ => false,
    }
}

/// Blow-up time of the scalar ODE `u' = g(u) - κu`, `u(0) = u0`, or
/// infinity when the solution stays bounded.
pub fn ode_blowup_time(g: &FunctionSpec, kappa: f64, u0: f64) -> Result<f64> {
    if g.role != Role::BoundaryG {
        return Err(Error::InvalidFunction("expected a boundary reaction".into()));
    }
    g.validate()?;
    if !u0.is_finite() || !kappa.is_finite() {
        return Err(Error::Precondition("u0 and kappa must be finite".into()));
    }
    let h = |s: f64| g.eval(s) - kappa * s;
    let h0 = h(u0);
    if h0 == 0.0 {
        return Err(Error::NonIntegrable);
    }
    // every family is odd, so motion toward -∞ mirrors motion toward +∞
    if h0 * u0 <= 0.0 || !superlinear_at_infinity(g) {
        return Ok(f64::INFINITY);
    }
    let a = u0.abs();
    let mut s = a;
    let stop = 1e8 * a.max(1.0);
    while s < stop {
        s *= 1.001;
        if h(s) <= 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    let integrand = |s: f64| {
        let one_minus = 1.0 - s;
        if one_minus <= 0.0 {
            return 0.0;
        }
        let xi = a + s / one_minus;
        let v = 1.0 / (h(xi) * one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let out = quadrature::double_exponential::integrate(integrand, 0.0, 1.0, 1e-12);
    if !out.integral.is_finite() {
        return Err(Error::Faulted("blow-up quadrature diverged".into()));
    }
    Ok(out.integral)
}

/// The blow-up subsolution `φ(y + t) = ((r-1)(2 - y - t))^{-1/(r-1)}` built
/// on the profile `a(x, y) = y`, which has unit gradient and no tangential
/// variation along Γ. It blows up on the top circle at `t = 1`.
pub fn subsolution_field(grid: &Grid, r: f64, t: f64) -> Result<DomainField> {
    if !(r > 1.0 && r <= 2.0) {
        return Err(Error::Precondition(format!("r must lie in (1, 2], got {r}")));
    }
    if t >= 1.0 {
        return Err(Error::PastBlowup(t));
    }
    let e = -1.0 / (r - 1.0);
    Ok(DomainField::from_fn(grid, |_, y| ((r - 1.0) * (2.0 - y - t)).powf(e)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    /// `min (u - φ)` over checked samples and nodes.
    pub min_margin: f64,
    pub samples_checked: usize,
    pub pass: bool,
}

pub const DOMINATION_TOLERANCE: f64 = 1e-8;

/// Check `u ≥ φ` at every recorded sample with `t ≤ horizon` (and before the
/// subsolution blows up). Samples must carry the interior field.
pub fn verify_domination(grid: &Grid, trajectory: &Trajectory, r: f64, horizon: f64) -> Result<DominationReport> {
    let first = trajectory
        .samples
        .first()
        .ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let margin = |u: &DomainField, t: f64| -> Result<f64> {
        let phi = subsolution_field(grid, r, t)?;
        Ok(u.values()
            .iter()
            .zip(phi.values())
            .fold(f64::INFINITY, |m, (a, b)| m.min(a - b)))
    };
    let u0 = first
        .u
        .as_ref()
        .ok_or_else(|| Error::Precondition("trajectory does not record the interior field".into()))?;
    if margin(u0, first.t)? < -DOMINATION_TOLERANCE {
        return Err(Error::Precondition("initial data lies below the subsolution".into()));
    }
    let mut min_margin = f64::INFINITY;
    let mut checked = 0;
    for s in trajectory.samples.iter().filter(|s| s.t <= horizon && s.t < 1.0) {
        let u = s
            .u
            .as_ref()
            .ok_or_else(|| Error::Precondition("trajectory does not record the interior field".into()))?;
        min_margin = min_margin.min(margin(u, s.t)?);
        checked += 1;
    }
    Ok(DominationReport {
        min_margin,
        samples_checked: checked,
        pass: min_margin >= -DOMINATION_TOLERANCE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RateModel {
    Exponential,
    AlgebraicLojasiewicz { exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub model: RateModel,
    pub fitted_rate: f64,
    /// RMS residual of the log-distance fit.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `(t, ‖u_Γ(t) - u_Γ(t_end)‖)` for every sample before the end.
    pub distances: Vec<(f64, f64)>,
    /// `‖u_Γ(t+1) - u_Γ(t)‖` at integer times.
    pub cauchy_tail: Vec<f64>,
    pub fit: Result<RateFit>,
}

pub const MIN_CONVERGENCE_SAMPLES: usize = 20;
const MIN_FIT_POINTS: usize = 5;

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// Fit the decay of `‖u_Γ(t) - u_Γ(t_end)‖` by `e^{-rt}` and by
/// `(1+t)^{-p}`, using the last half of the window where the distance is
/// clearly above the endpoint's own uncertainty.
pub fn convergence_report(grid: &Grid, trajectory: &Trajectory) -> Result<ConvergenceReport> {
    let s = &trajectory.samples;
    if s.len() < MIN_CONVERGENCE_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least {MIN_CONVERGENCE_SAMPLES}",
            s.len()
        )));
    }
    let last = &s[s.len() - 1];
    let t_end = last.t;
    let dist = |u: &BoundaryField| {
        let diff: Vec<f64> = u.values().iter().zip(last.u_gamma.values()).map(|(a, b)| a - b).collect();
        grid.boundary_l2(&diff)
    };
    let distances: Vec<(f64, f64)> = s[..s.len() - 1].iter().map(|x| (x.t, dist(&x.u_gamma))).collect();

    let t0 = s[0].t;
    let mut cauchy_tail = Vec::new();
    let mut t = t0;
    while t + 1.0 <= t_end + 1e-12 {
        let a = trajectory.boundary_at(t).expect("time inside the trajectory");
        let b = trajectory.boundary_at((t + 1.0).min(t_end)).expect("time inside the trajectory");
        let diff: Vec<f64> = b.values().iter().zip(a.values()).map(|(p, q)| p - q).collect();
        cauchy_tail.push(grid.boundary_l2(&diff));
        t += 1.0;
    }

    let floor = (1e3 * cauchy_tail.last().copied().unwrap_or(0.0))
        .max(1e-10 * grid.boundary_l2(last.u_gamma.values()).max(1.0));
    let informative: Vec<(f64, f64)> = distances.iter().copied().filter(|&(_, d)| d > floor).collect();
    let fit = (|| {
        let (first, end) = match (informative.first(), informative.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => return Err(Error::InsufficientData("no distance above the noise floor".into())),
        };
        let mid = 0.5 * (first + end);
        let window: Vec<(f64, f64)> = informative.iter().copied().filter(|p| p.0 >= mid).collect();
        if window.len() < MIN_FIT_POINTS {
            return Err(Error::InsufficientData(format!(
                "{} informative samples in the fit window",
                window.len()
            )));
        }
        let ts: Vec<f64> = window.iter().map(|p| p.0).collect();
        let logs: Vec<f64> = window.iter().map(|p| p.1.ln()).collect();
        let log_ts: Vec<f64> = ts.iter().map(|t| (1.0 + t).ln()).collect();
        let (se, _, re) = line_fit(&ts, &logs);
        let (sa, _, ra) = line_fit(&log_ts, &logs);
        Ok(if re <= ra {
            RateFit {
                model: RateModel::Exponential,
                fitted_rate: -se,
                residual: re,
            }
        } else {
            RateFit {
                model: RateModel::AlgebraicLojasiewicz { exponent: -sa },
                fitted_rate: -sa,
                residual: ra,
            }
        })
    })();
    Ok(ConvergenceReport {
        distances,
        cauchy_tail,
        fit,
    })
}
