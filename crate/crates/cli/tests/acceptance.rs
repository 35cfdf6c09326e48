//! Acceptance suite. Runs every criterion on the baseline grid (periodic
//! strip of length 2π, 64 × 256 nodes) unless noted, prints one line per
//! criterion and fails if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dynbc_core::diagnostics::{convergence_report, dissipation_report, verify_domination, RateModel};
use dynbc_core::dynamics::{
    dimensional_reduction_check, run, BoundaryCoefficient, InitialSpec, Problem, RunReport, Scenario,
    TerminationStatus,
};
use dynbc_core::grid::{build_grid, BoundaryField, GeometrySpec};
use dynbc_core::nonlinearity::{DiffusivitySpec, Family, FunctionSpec};
use dynbc_core::spectral::{assemble_stekloff, smallest_eigenvalue};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn baseline() -> GeometrySpec {
    GeometrySpec::strip(2.0 * PI, 64, 256)
}

fn boundary(f: Family) -> FunctionSpec {
    FunctionSpec::boundary(f).unwrap()
}

/// Separation of variables on the strip: the modes e^{ikx} cosh / sinh in y.
fn strip_dtn_oracle(count: usize) -> Vec<f64> {
    let mut v = Vec::new();
    for k in 0..4u32 {
        let mu = f64::from(k * k + 1).sqrt();
        let mult = if k == 0 { 1 } else { 2 };
        for _ in 0..mult {
            v.push(mu * (mu / 2.0).tanh());
            v.push(mu / (mu / 2.0).tanh());
        }
    }
    v.sort_by(f64::total_cmp);
    v.truncate(count);
    v
}

fn dtn_spectrum() -> Outcome {
    let p = Problem::new(Scenario::new(baseline(), 1.0)).map_err(|e| e.to_string())?;
    let n = p.dtn();
    // the boundary weights are uniform, so the spectrum is that of the symmetric part
    let sym = (n + n.transpose()) * 0.5;
    let mut eig: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let mut worst = 0.0f64;
    for (got, want) in eig.iter().zip(strip_dtn_oracle(5)) {
        let rel = ((got - want) / want).abs();
        ensure(rel < 0.01, || format!("{got} vs {want}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("max rel error {worst:.2e}"))
}

fn stekloff_baseline() -> Outcome {
    let grid = std::sync::Arc::new(build_grid(baseline()).unwrap());
    let d = dynbc_core::grid::DomainField::constant(&grid, 1.0);
    let zero = BoundaryField::zeros(&grid);
    let spectrum = |c_g: f64| {
        let p = assemble_stekloff(&grid, &d, 1.0, &zero, 0.0, c_g).unwrap();
        smallest_eigenvalue(&p, 8).unwrap()
    };
    let base = spectrum(0.0);
    let target = 0.5f64.tanh();
    let rel = ((base.xi1 - target) / target).abs();
    ensure(rel < 0.01, || format!("xi1 = {} vs {target}", base.xi1))?;
    let shifted = spectrum(0.1);
    let shift_err = base
        .eigenvalues
        .iter()
        .zip(&shifted.eigenvalues)
        .map(|(a, b)| (b - a + 0.1).abs())
        .fold(0.0f64, f64::max);
    ensure(shift_err <= 1e-9, || format!("shift error {shift_err:e}"))?;
    ensure(base.positive, || "baseline not positive".into())?;
    let below = spectrum(base.xi1 - 1e-3);
    let above = spectrum(base.xi1 + 1e-3);
    ensure(below.positive && !above.positive, || "positivity flag does not flip at xi1".into())?;
    Ok(format!("xi1 = {:.6} (rel {rel:.1e}), shift error {shift_err:.1e}", base.xi1))
}

fn blowup_time() -> Outcome {
    let mut sc = Scenario::new(baseline(), 1.0);
    sc.g = boundary(Family::PowerLaw { rho: 1.0, q: 2.0 });
    sc.u0 = InitialSpec::constant(1.0);
    sc.solver.dt_max = 0.002;
    let r = run(sc.clone()).map_err(|e| e.to_string())?;
    let t = r.status.blowup_time().ok_or_else(|| format!("status {}", r.status.label()))?;
    let oracle = 1.3418;
    let rel = ((t - oracle) / oracle).abs();
    ensure(rel < 0.02, || format!("t_estimate {t} vs {oracle}"))?;

    sc.u0 = InitialSpec::constant(0.4);
    sc.solver.dt_max = 0.05;
    let r = run(sc).map_err(|e| e.to_string())?;
    ensure(r.status == TerminationStatus::Completed, || format!("u0 = 0.4: {}", r.status.label()))?;
    let s = &r.trajectory.samples;
    ensure(s.windows(2).all(|w| w[1].boundary_linf <= w[0].boundary_linf), || {
        "u0 = 0.4 does not decay monotonically".into()
    })?;
    let last = s.last().unwrap().boundary_linf;
    ensure(last < 0.1 * 0.4, || format!("u0 = 0.4 ends at {last}"))?;
    Ok(format!("t_estimate {t:.4} (rel {rel:.1e}); u0 = 0.4 decays to {last:.1e}"))
}

fn bistable_scenario() -> Scenario {
    let mut sc = Scenario::new(baseline(), 1.0);
    sc.g = boundary(Family::Bistable { a: 1.0 });
    sc.u0 = InitialSpec::Profile { bottom: 3.0, top: -1.0, amplitude: 2.0, mode: 1 };
    sc.solver.t_end = 50.0;
    sc
}

struct Bistable {
    problem: Problem,
    report: RunReport,
}

fn bistable_run() -> Bistable {
    let problem = Problem::new(bistable_scenario()).unwrap();
    let report = problem.run();
    Bistable { problem, report }
}

fn global_existence(b: &Bistable) -> Outcome {
    let r = &b.report;
    ensure(r.status == TerminationStatus::Completed, || r.status.label().into())?;
    let u0 = r.trajectory.samples[0].boundary_linf;
    ensure((u0 - 5.0).abs() < 1e-12, || format!("initial sup norm {u0}"))?;
    let bound = 5.0f64.max(1.1);
    let sup = r.trajectory.samples.iter().map(|s| s.boundary_linf).fold(0.0, f64::max);
    ensure(sup <= bound, || format!("sup {sup} > {bound}"))?;
    let t = r.trajectory.last().unwrap().t;
    Ok(format!("reached t = {t}, sup norm {sup}"))
}

fn energy_dissipation(b: &Bistable) -> Outcome {
    let d = dissipation_report(b.problem.grid(), &b.report.trajectory).map_err(|e| e.to_string())?;
    ensure(d.monotone, || "energy increased between accepted steps".into())?;
    let mut residuals = Vec::new();
    for dt in [0.002, 0.001, 0.0005] {
        let mut sc = bistable_scenario();
        sc.solver.adaptive = false;
        sc.solver.dt0 = dt;
        sc.solver.dt_min = dt / 4.0;
        sc.solver.t_end = 0.2;
        let p = Problem::new(sc).unwrap();
        let r = p.run();
        ensure(r.status == TerminationStatus::Completed, || r.status.label().into())?;
        let rep = dissipation_report(p.grid(), &r.trajectory).map_err(|e| e.to_string())?;
        let dissipated: f64 = rep.samples.iter().map(|s| s.boundary_rate_sq * dt).sum();
        let e = |k: usize| rep.samples[k].energy;
        residuals.push(e(rep.samples.len() - 1) - e(0) + dissipated);
    }
    let order = ((residuals[0] - residuals[1]) / (residuals[1] - residuals[2])).log2();
    ensure(order >= 0.8, || format!("observed order {order}"))?;
    Ok(format!("monotone; residual order {order:.2}"))
}

fn exponential_decay() -> Outcome {
    let mut lines = Vec::new();
    for delta in [DiffusivitySpec::ZeroSurface, DiffusivitySpec::Constant { delta0: 1.0 }] {
        let mut sc = Scenario::new(baseline(), 1.0);
        sc.delta = delta;
        sc.g = boundary(Family::Linear { a: 0.1 });
        sc.u0 = InitialSpec::Profile { bottom: 1.0, top: 1.0, amplitude: 0.5, mode: 1 };
        sc.solver.t_end = 80.0;
        let p = Problem::new(sc).unwrap();
        let r = p.run();
        ensure(r.status == TerminationStatus::Completed, || r.status.label().into())?;
        let grid = p.grid();
        let delta_field = BoundaryField::constant(grid, delta.eval(0.0));
        let stek = assemble_stekloff(grid, p.diffusivity(), 1.0, &delta_field, 0.0, 0.1).unwrap();
        let xi = smallest_eigenvalue(&stek, 1).unwrap().xi1;
        let fit = convergence_report(grid, &r.trajectory)
            .map_err(|e| e.to_string())?
            .fit
            .map_err(|e| e.to_string())?;
        let rel = ((fit.fitted_rate - xi) / xi).abs();
        ensure(rel < 0.05, || format!("delta0 = {}: rate {} vs {xi}", delta.eval(0.0), fit.fitted_rate))?;
        let eta = 0.5 * fit.fitted_rate;
        let u0 = r.trajectory.samples[0].boundary_l2;
        for s in &r.trajectory.samples {
            let bound = (-2.0 * eta * s.t).exp() * u0;
            ensure(s.boundary_l2 <= bound * (1.0 + 1e-12), || {
                format!("bound violated at t = {}: {} > {bound}", s.t, s.boundary_l2)
            })?;
        }
        lines.push(format!("delta0 = {}: rate {:.4} vs {xi:.4}", delta.eval(0.0), fit.fitted_rate));
    }
    Ok(lines.join("; "))
}

fn ordered_pair_margin(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let spec = baseline();
    let grid = build_grid(spec).unwrap();
    let mut sc = Scenario::new(spec, 1.0);
    sc.f = FunctionSpec::interior(if rng.random_bool(0.5) {
        Family::Zero
    } else {
        Family::Linear { a: rng.random_range(0.0..0.5) }
    })
    .unwrap();
    sc.g = boundary(if rng.random_bool(0.5) {
        Family::Linear { a: rng.random_range(-1.0..1.0) }
    } else {
        Family::Bistable { a: rng.random_range(0.2..1.0) }
    });
    sc.solver.adaptive = false;
    sc.solver.dt0 = 0.02;
    sc.solver.dt_min = 1e-4;
    sc.solver.t_end = 1.0;
    sc.solver.record_domain = true;
    let n = grid.boundary_count();
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|a| (a + rng.random_range(0.0..0.5)).min(1.5)).collect();
    sc.u0 = InitialSpec::Field(BoundaryField::from_values(&grid, lower).unwrap());
    let ru = run(sc.clone()).map_err(|e| e.to_string())?;
    sc.u0 = InitialSpec::Field(BoundaryField::from_values(&grid, upper).unwrap());
    let rv = run(sc).map_err(|e| e.to_string())?;
    for r in [&ru, &rv] {
        ensure(r.status == TerminationStatus::Completed, || r.status.label().into())?;
    }
    let mut margin = f64::INFINITY;
    for (a, b) in ru.trajectory.samples.iter().zip(&rv.trajectory.samples) {
        let (ua, ub) = (a.u.as_ref().unwrap(), b.u.as_ref().unwrap());
        for (x, y) in ua.values().iter().zip(ub.values()) {
            margin = margin.min(y - x);
        }
    }
    Ok(margin)
}

fn comparison_principle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let mut worst = f64::INFINITY;
    for k in 0..10 {
        let m = ordered_pair_margin(&mut rng)?;
        ensure(m >= -1e-10, || format!("pair {k}: margin {m:e}"))?;
        worst = worst.min(m);
    }

    let mut sc = Scenario::new(baseline(), 1.0);
    sc.g = boundary(Family::PowerLaw { rho: 1.0, q: 3.0 });
    sc.u0 = InitialSpec::Profile { bottom: 1.0, top: 4.0, amplitude: 0.0, mode: 0 };
    sc.solver.record_domain = true;
    sc.solver.dt_max = 0.002;
    let p = Problem::new(sc).unwrap();
    let r = p.run();
    let t = r.status.blowup_time().ok_or_else(|| format!("status {}", r.status.label()))?;
    let rep = verify_domination(p.grid(), &r.trajectory, 1.5, 0.9 * t).map_err(|e| e.to_string())?;
    ensure(rep.pass, || format!("{rep:?}"))?;
    Ok(format!(
        "min pair margin {worst:.2e}; domination over {} samples up to {:.4}",
        rep.samples_checked,
        0.9 * t
    ))
}

fn dimensional_reduction() -> Outcome {
    let mut decay = Scenario::new(baseline(), 1.0);
    decay.g = boundary(Family::Linear { a: 0.1 });
    decay.u0 = InitialSpec::Profile { bottom: 1.0, top: 0.5, amplitude: 0.0, mode: 0 };
    decay.solver.t_end = 3.0;
    let mut blow = Scenario::new(baseline(), 1.0);
    blow.g = boundary(Family::PowerLaw { rho: 1.0, q: 2.0 });
    blow.u0 = InitialSpec::constant(1.0);
    let mut out = Vec::new();
    for (name, sc) in [("decay", decay), ("blow-up", blow)] {
        let r = dimensional_reduction_check(&sc).map_err(|e| e.to_string())?;
        ensure(r.samples_compared > 10, || format!("{name}: {} samples", r.samples_compared))?;
        ensure(r.max_deviation <= 1e-10, || format!("{name}: deviation {:e}", r.max_deviation))?;
        out.push(format!("{name} {:.1e}", r.max_deviation));
    }
    let blow_status = &out[1];
    Ok(format!("max deviation {}, {blow_status}", out[0]))
}

fn coupling_independence() -> Outcome {
    let mut sc = Scenario::new(baseline(), 1.0);
    sc.delta = DiffusivitySpec::Constant { delta0: 1.0 };
    sc.b = BoundaryCoefficient::Constant(-1.0);
    sc.g = boundary(Family::Linear { a: -3.0 });
    sc.u0 = InitialSpec::Profile { bottom: 1.0, top: 0.5, amplitude: 0.3, mode: 1 };
    sc.solver.t_end = 5.0;
    let r = run(sc.clone()).map_err(|e| e.to_string())?;
    ensure(r.status == TerminationStatus::Completed, || r.status.label().into())?;
    ensure(!r.has_stability_warning(), || "unexpected warning".into())?;
    let first = r.trajectory.samples[0].boundary_linf;
    let sup = r.trajectory.samples.iter().map(|s| s.boundary_linf).fold(0.0, f64::max);
    ensure(sup <= first, || format!("grew to {sup} from {first}"))?;

    sc.delta = DiffusivitySpec::ZeroSurface;
    sc.solver.t_end = 0.1;
    let r = run(sc).map_err(|e| e.to_string())?;
    ensure(r.has_stability_warning(), || "no stability warning for delta = 0".into())?;
    Ok(format!("bounded by {first}; warning raised without surface diffusion"))
}

fn single_equilibrium(b: &Bistable) -> Outcome {
    let c = convergence_report(b.problem.grid(), &b.report.trajectory).map_err(|e| e.to_string())?;
    let below = c
        .cauchy_tail
        .iter()
        .position(|&v| v < 1e-8)
        .ok_or_else(|| format!("tail ends at {:e}", c.cauchy_tail.last().unwrap()))?;
    ensure(c.cauchy_tail[..=below].windows(2).all(|w| w[1] < w[0]), || {
        "Cauchy tail not strictly decreasing".into()
    })?;
    let fit = c.fit.map_err(|e| e.to_string())?;
    ensure(fit.model == RateModel::Exponential && fit.fitted_rate > 0.0, || format!("{fit:?}"))?;
    Ok(format!("tail below 1e-8 at t = {below}; exponential rate {:.3}", fit.fitted_rate))
}

const BIN: &str = env!("CARGO_BIN_EXE_dynbc");

fn cli(args: &[&str]) -> i32 {
    Command::new(BIN)
        .args(args)
        .env_remove("DYNBC_THREADS")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn cli_contract() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let dir = tmp.path();
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };
    let out = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let decay = write(
        "decay.ini",
        "[geometry]\nkind = strip\nnx = 16\nny = 32\n[coefficients]\nlambda = 1\n\
         [nonlinearity.g]\nfamily = bistable\na = 1\n\
         [initial]\nkind = profile\nbottom = 2\ntop = -1\namplitude = 1\nmode = 1\n[solver]\nt_end = 3\n",
    );
    let blowup = write(
        "blowup.ini",
        "[geometry]\nkind = interval\nny = 32\n[coefficients]\nlambda = 1\n\
         [nonlinearity.g]\nfamily = power_law\nrho = 1\nq = 2\n[initial]\nkind = constant\nvalue = 1\n",
    );
    let noncontraction = write(
        "nc.ini",
        "[geometry]\nkind = interval\nny = 16\n[coefficients]\nlambda = 0.05\n\
         [nonlinearity.f]\nfamily = linear\na = 40\n[initial]\nkind = constant\nvalue = 1\n",
    );
    let fault = write(
        "fault.ini",
        "[geometry]\nkind = interval\nny = 16\n[coefficients]\nlambda = 1\n\
         [nonlinearity.g]\nfamily = power_law\nrho = 1\nq = 2\n[initial]\nkind = constant\nvalue = 5\n\
         [solver]\nadaptive = false\ndt0 = 0.05\nblowup_threshold = 1e300\n",
    );
    let typo = write("typo.ini", &fs::read_to_string(&decay).unwrap().replace("a = 1", "a = 1\nrh0 = 2"));

    // determinism
    let mut files = Vec::new();
    for k in 0..2 {
        let o = out(&format!("det{k}"));
        ensure(cli(&["run", &decay, "--out", &o]) == 0, || "decay run failed".into())?;
        let traj = fs::read(Path::new(&o).join("trajectory.csv")).unwrap();
        let mut manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(Path::new(&o).join("manifest.json")).unwrap()).unwrap();
        manifest["wall_clock_seconds"] = serde_json::Value::Null;
        files.push((traj, manifest));
    }
    ensure(files[0] == files[1], || "repeated runs differ".into())?;

    let table = [
        (vec!["run", &decay], 0),
        (vec!["run", &blowup], 2),
        (vec!["run", &blowup, "--expect", "blowup"], 0),
        (vec!["run", &noncontraction], 3),
        (vec!["run", &fault], 4),
        (vec!["run", &typo], 1),
        (vec!["run", "/nonexistent/scenario.ini"], 1),
        (vec!["bogus"], 1),
    ];
    for (k, (args, want)) in table.iter().enumerate() {
        let o = out(&format!("x{k}"));
        let mut a = args.clone();
        if a.len() > 1 {
            a.extend(["--out", o.as_str()]);
        }
        let got = cli(&a);
        ensure(got == *want, || format!("{args:?}: exit {got}, expected {want}"))?;
    }
    Ok(format!("byte-identical reruns; {} exit-code cases", table.len()))
}

fn main() {
    let mut results: Vec<(&str, Outcome, f64)> = Vec::new();
    let mut check = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let tag = if r.is_ok() { "PASS" } else { "FAIL" };
        let msg = match &r {
            Ok(m) | Err(m) => m,
        };
        println!("[{tag}] {name} ({secs:.1} s): {msg}");
        results.push((name, r, secs));
    };

    check("1 DtN spectrum", &mut dtn_spectrum);
    check("2 Stekloff baseline", &mut stekloff_baseline);
    check("3 blow-up time", &mut blowup_time);
    let bistable = bistable_run();
    check("4 global existence", &mut || global_existence(&bistable));
    check("5 energy dissipation", &mut || energy_dissipation(&bistable));
    check("6 exponential decay", &mut exponential_decay);
    check("7 comparison principle", &mut comparison_principle);
    check("8 dimensional reduction", &mut dimensional_reduction);
    check("9 coupling independence", &mut coupling_independence);
    check("10 single equilibrium", &mut || single_equilibrium(&bistable));
    check("11 determinism and CLI contract", &mut cli_contract);

    let failed: Vec<&str> = results.iter().filter(|r| r.1.is_err()).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        panic!("failed criteria: {failed:?}");
    }
}
