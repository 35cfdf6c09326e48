use std::f64::consts::PI;
use std::sync::Arc;

use dynbc_core::diagnostics::{convergence_report, dissipation_report, energy, RateModel};
use dynbc_core::dynamics::{InitialSpec, Problem, Scenario, TerminationStatus};
use dynbc_core::grid::{BoundaryField, GeometrySpec};
use dynbc_core::nonlinearity::{DiffusivitySpec, Family, FunctionSpec};
use dynbc_core::spectral::{assemble_stekloff, smallest_eigenvalue};

fn linear_decay(delta: DiffusivitySpec) -> Scenario {
    let mut sc = Scenario::new(GeometrySpec::strip(2.0 * PI, 16, 64), 1.0);
    sc.delta = delta;
    sc.g = FunctionSpec::boundary(Family::Linear { a: 0.1 }).unwrap();
    sc.u0 = InitialSpec::Profile { bottom: 1.0, top: 1.0, amplitude: 0.5, mode: 1 };
    sc.solver.t_end = 60.0;
    sc
}

#[test]
fn decay_rate_matches_spectrum() {
    for delta in [DiffusivitySpec::ZeroSurface, DiffusivitySpec::Constant { delta0: 1.0 }] {
        let p = Problem::new(linear_decay(delta)).unwrap();
        let r = p.run();
        assert_eq!(r.status, TerminationStatus::Completed);
        let grid = p.grid();
        let stek = assemble_stekloff(
            grid,
            p.diffusivity(),
            1.0,
            &BoundaryField::constant(grid, delta.eval(0.0)),
            0.0,
            0.1,
        )
        .unwrap();
        let xi = smallest_eigenvalue(&stek, 1).unwrap().xi1;
        let fit = convergence_report(grid, &r.trajectory).unwrap().fit.unwrap();
        assert_eq!(fit.model, RateModel::Exponential);
        assert!(((fit.fitted_rate - xi) / xi).abs() < 0.05, "{} vs {xi}", fit.fitted_rate);
        let u0 = r.trajectory.samples[0].boundary_l2;
        for s in &r.trajectory.samples {
            assert!(s.boundary_l2 <= (-fit.fitted_rate * s.t).exp() * u0 * (1.0 + 1e-12));
        }
    }
}

#[test]
fn bistable_cauchy_tail_and_fit() {
    let mut sc = Scenario::new(GeometrySpec::strip(2.0 * PI, 16, 32), 1.0);
    sc.g = FunctionSpec::boundary(Family::Bistable { a: 1.0 }).unwrap();
    sc.u0 = InitialSpec::Profile { bottom: 3.0, top: -1.0, amplitude: 2.0, mode: 1 };
    sc.solver.t_end = 50.0;
    let p = Problem::new(sc).unwrap();
    let r = p.run();
    let c = convergence_report(p.grid(), &r.trajectory).unwrap();
    let below = c.cauchy_tail.iter().position(|&v| v < 1e-8).expect("tail reaches 1e-8");
    assert!(c.cauchy_tail[..=below].windows(2).all(|w| w[1] < w[0]));
    let fit = c.fit.unwrap();
    assert_eq!(fit.model, RateModel::Exponential);
    assert!(fit.fitted_rate > 0.0);
}

#[test]
fn dissipation_residual_is_first_order() {
    let mut rs = Vec::new();
    for dt in [0.004, 0.002, 0.001] {
        let mut sc = Scenario::new(GeometrySpec::strip(2.0 * PI, 16, 64), 1.0);
        sc.g = FunctionSpec::boundary(Family::Bistable { a: 1.0 }).unwrap();
        sc.u0 = InitialSpec::Profile { bottom: 1.5, top: -0.5, amplitude: 1.0, mode: 1 };
        sc.solver.adaptive = false;
        sc.solver.dt0 = dt;
        sc.solver.dt_min = dt / 4.0;
        sc.solver.t_end = 0.2;
        let p = Problem::new(sc).unwrap();
        let r = p.run();
        let rep = dissipation_report(p.grid(), &r.trajectory).unwrap();
        let e = |k: usize| rep.samples[k].energy;
        let dissipated: f64 = rep.samples.iter().map(|s| s.boundary_rate_sq * dt).sum();
        rs.push(e(rep.samples.len() - 1) - e(0) + dissipated);
    }
    let order = ((rs[0] - rs[1]) / (rs[1] - rs[2])).log2();
    assert!(order >= 0.8, "observed order {order}");
}

#[test]
fn energy_of_constrained_states() {
    let mut sc = Scenario::new(GeometrySpec::strip(2.0 * PI, 8, 16), 2.0);
    sc.f = FunctionSpec::interior(Family::BoundedSmooth { c: 0.3, s0: 1.0 }).unwrap();
    sc.u0 = InitialSpec::constant(0.7);
    let p = Problem::new(sc).unwrap();
    let mut s = p.initial_state().unwrap();
    assert!(energy(&p, &s).unwrap().is_some());
    s.u.values_mut()[Arc::clone(p.grid()).interior_indices()[3]] += 1.0;
    assert!(energy(&p, &s).is_err());
}
