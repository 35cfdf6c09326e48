//! Subcommands and their output files.
//!
//! | file              | columns                                         |
//! |-------------------|-------------------------------------------------|
//! | `trajectory.csv`  | `t,boundary_l2,boundary_linf,energy,dt`         |
//! | `spectrum.csv`    | `index,eigenvalue`                              |
//! | `blowup.csv`      | `u0` or `exponent`, `t_estimate,oracle_time,rel_error` |
//! | `run_NNN/trajectory.csv` | one per sweep value, in sweep order       |
//! | `convergence.csv` | `t,distance`                                    |
//! | `cauchy_tail.csv` | `t,increment`                                   |
//! | `convergence_fit.csv` | `model,exponent,fitted_rate,residual`       |
//! | `manifest.json`   | scenario echo, version, grid hash, timing, status |
//!
//! Numbers are written in shortest round-trip exponent form; an empty
//! cell means "not applicable" and `inf` an infinite value.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dynbc_core::diagnostics::{convergence_report, ode_blowup_time, RateModel};
use dynbc_core::dynamics::{InitialSpec, Problem, RunReport, Scenario, TerminationStatus};
use dynbc_core::grid::{build_grid, BoundaryField, Grid};
use dynbc_core::nonlinearity::Family;
use dynbc_core::spectral::{assemble_stekloff, smallest_eigenvalue};
use dynbc_core::Error as CoreError;
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{Config, ConfigError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_BLOWUP: i32 = 2;
pub const EXIT_NON_CONTRACTION: i32 = 3;
pub const EXIT_FAULTED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error("strict mode: {0}")]
    Strict(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub out: PathBuf,
    pub expect_blowup: bool,
    pub strict: bool,
    /// Path echoed into the manifest.
    pub config_path: Option<PathBuf>,
}

/// What a command hands back to `main`: the status label and the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: String,
    pub exit_code: i32,
}

pub fn exit_code(status: &TerminationStatus, expect_blowup: bool) -> i32 {
    match status {
        TerminationStatus::Completed => EXIT_OK,
        TerminationStatus::BlowUp { .. } if expect_blowup => EXIT_OK,
        TerminationStatus::BlowUp { .. } => EXIT_BLOWUP,
        TerminationStatus::NonContraction { .. } => EXIT_NON_CONTRACTION,
        TerminationStatus::Faulted { .. } => EXIT_FAULTED,
    }
}

pub fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// SHA-256 over the geometry and the node coordinates.
pub fn grid_hash(grid: &Grid) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&grid.spec).expect("geometry serializes"));
    for v in grid.xs().iter().chain(grid.ys()) {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

struct Manifest<'a> {
    command: &'a str,
    opts: &'a Options,
    scenario: Option<&'a Scenario>,
    started: Instant,
}

impl<'a> Manifest<'a> {
    fn new(command: &'a str, opts: &'a Options, scenario: Option<&'a Scenario>) -> Self {
        Self {
            command,
            opts,
            scenario,
            started: Instant::now(),
        }
    }

    fn write(&self, status: &str, detail: Value) -> Result<(), CliError> {
        let grid = self.scenario.and_then(|s| build_grid(s.geometry).ok());
        let doc = json!({
            "artifact": "dynbc",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.opts.config_path.as_ref().map(|p| p.display().to_string()),
            "scenario": self.scenario,
            "grid_hash": grid.as_ref().map(grid_hash),
            "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
            "status": status,
            "detail": detail,
        });
        let text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
        write_file(&self.opts.out, "manifest.json", &(text + "\n"))
    }
}

/// Manifest for a configuration that could not be parsed or validated.
pub fn write_invalid_manifest(command: &str, opts: &Options, error: &str) -> Result<(), CliError> {
    prepare_out(&opts.out)?;
    Manifest::new(command, opts, None).write("Invalid", json!({ "error": error }))
}

fn build_problem(manifest: &Manifest, scenario: &Scenario, strict: bool) -> Result<Problem, CliError> {
    let problem = match Problem::new(scenario.clone()) {
        Ok(p) => p,
        Err(e) => {
            manifest.write("Invalid", json!({ "error": e.to_string() }))?;
            return Err(ConfigError::Validation(e.to_string()).into());
        }
    };
    if strict && !problem.warnings().is_empty() {
        let detail = json!({ "warnings": problem.warnings() });
        manifest.write("Rejected", detail)?;
        return Err(CliError::Strict(format!("{:?}", problem.warnings())));
    }
    Ok(problem)
}

fn run_detail(report: &RunReport) -> Value {
    json!({
        "termination": report.status,
        "warnings": report.warnings,
        "accepted_steps": report.accepted_steps,
        "rejected_steps": report.rejected_steps,
        "samples": report.trajectory.len(),
    })
}

pub fn trajectory_csv(report: &RunReport) -> String {
    let mut out = String::from("t,boundary_l2,boundary_linf,energy,dt\n");
    for s in &report.trajectory.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(s.t),
            num(s.boundary_l2),
            num(s.boundary_linf),
            opt_num(s.energy),
            num(s.dt)
        );
    }
    out
}

pub fn cmd_run(config: &Config, opts: &Options) -> Result<Outcome, CliError> {
    prepare_out(&opts.out)?;
    let manifest = Manifest::new("run", opts, Some(&config.scenario));
    let problem = build_problem(&manifest, &config.scenario, opts.strict)?;
    let report = problem.run();
    write_file(&opts.out, "trajectory.csv", &trajectory_csv(&report))?;
    manifest.write(report.status.label(), run_detail(&report))?;
    Ok(Outcome {
        status: report.status.label().into(),
        exit_code: exit_code(&report.status, opts.expect_blowup),
    })
}

pub fn cmd_spectrum(config: &Config, opts: &Options) -> Result<Outcome, CliError> {
    prepare_out(&opts.out)?;
    let sc = &config.scenario;
    let manifest = Manifest::new("spectrum", opts, Some(sc));
    let invalid = |message: String| -> Result<Outcome, CliError> {
        manifest.write("Invalid", json!({ "error": message }))?;
        Err(ConfigError::Validation(message).into())
    };
    let grid = std::sync::Arc::new(build_grid(sc.geometry).map_err(|e| ConfigError::Validation(e.to_string()))?);
    let d = sc.d.resolve(&grid).map_err(|e| ConfigError::Validation(e.to_string()))?;
    let delta = if grid.is_interval() {
        BoundaryField::zeros(&grid)
    } else {
        BoundaryField::constant(&grid, sc.delta.eval(0.0))
    };
    let c_f = sc.f.sign_condition_constant().unwrap_or(0.0);
    let Some(c_g) = sc.g.sign_condition_constant() else {
        return invalid("g has no finite sign-condition constant (superlinear growth)".into());
    };
    let problem = match assemble_stekloff(&grid, &d, sc.lambda, &delta, c_f, c_g) {
        Ok(p) => p,
        Err(e @ CoreError::ShiftViolation { .. }) => return invalid(e.to_string()),
        Err(e) => {
            manifest.write("Faulted", json!({ "error": e.to_string() }))?;
            return Ok(Outcome {
                status: "Faulted".into(),
                exit_code: EXIT_FAULTED,
            });
        }
    };
    let report = match smallest_eigenvalue(&problem, config.output.eigenvalues) {
        Ok(r) => r,
        Err(e) => {
            manifest.write("Faulted", json!({ "error": e.to_string() }))?;
            return Ok(Outcome {
                status: "Faulted".into(),
                exit_code: EXIT_FAULTED,
            });
        }
    };
    let mut csv = String::from("index,eigenvalue\n");
    for (k, v) in report.eigenvalues.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", k + 1, num(*v));
    }
    write_file(&opts.out, "spectrum.csv", &csv)?;
    manifest.write(
        "Completed",
        json!({
            "xi1": report.xi1,
            "positive": report.positive,
            "c_f_tilde": c_f,
            "c_g": c_g,
            "asymmetry": problem.asymmetry,
        }),
    )?;
    Ok(Outcome {
        status: "Completed".into(),
        exit_code: EXIT_OK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    InitialValue,
    Exponent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl std::str::FromStr for Sweep {
    type Err = String;

    /// `u0=0.5,1,2` or `exponent=1.5,2,3`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, list) = s.split_once('=').ok_or("expected `u0=...` or `exponent=...`")?;
        let parameter = match name.trim() {
            "u0" => SweepParameter::InitialValue,
            "exponent" => SweepParameter::Exponent,
            other => return Err(format!("unknown sweep parameter `{other}`")),
        };
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| format!("`{v}` is not a number"))
            })
            .collect::<Result<Vec<f64>, String>>()?;
        if values.is_empty() {
            return Err("empty sweep".into());
        }
        Ok(Sweep { parameter, values })
    }
}

fn constant_initial(sc: &Scenario) -> Option<f64> {
    match sc.u0 {
        InitialSpec::Profile {
            bottom,
            top,
            amplitude,
            ..
        } if bottom == top && amplitude == 0.0 => Some(bottom),
        _ => None,
    }
}

fn with_exponent(sc: &Scenario, q: f64) -> Option<Scenario> {
    let mut out = sc.clone();
    out.g.family = match sc.g.family {
        Family::PowerLaw { rho, .. } => Family::PowerLaw { rho, q },
        Family::DampedPower { rho, a, .. } => Family::DampedPower { rho, q, a },
        _ => return None,
    };
    Some(out)
}

struct StudyRow {
    value: f64,
    status: TerminationStatus,
    oracle: Result<f64, String>,
}

/// Blow-up times over a parameter sweep, against the scalar ODE obtained
/// for constant data (the DtN map acts on constants as a scalar drag).
pub fn cmd_blowup_study(config: &Config, sweep: &Sweep, opts: &Options) -> Result<Outcome, CliError> {
    prepare_out(&opts.out)?;
    let base = &config.scenario;
    let manifest = Manifest::new("blowup-study", opts, Some(base));
    let fail = |message: String| -> Result<Outcome, CliError> {
        manifest.write("Invalid", json!({ "error": message }))?;
        Err(ConfigError::Validation(message).into())
    };
    let Some(base_u0) = constant_initial(base) else {
        return fail("blowup-study needs constant initial data".into());
    };
    let mut scenarios = Vec::with_capacity(sweep.values.len());
    for &v in &sweep.values {
        let sc = match sweep.parameter {
            SweepParameter::InitialValue => {
                let mut sc = base.clone();
                sc.u0 = InitialSpec::constant(v);
                sc
            }
            SweepParameter::Exponent => match with_exponent(base, v) {
                Some(sc) => sc,
                None => return fail("an exponent sweep needs g = power_law or damped_power".into()),
            },
        };
        let grid = build_grid(sc.geometry).map_err(|e| ConfigError::Validation(e.to_string()))?;
        if let Err(e) = sc.validate(&grid) {
            return fail(format!("sweep value {v}: {e}"));
        }
        scenarios.push((v, sc));
    }
    let first = build_problem(&manifest, &scenarios[0].1, opts.strict)?;
    let b = first.coupling_scale().values()[0];
    // drag on constants: the first row sum of the DtN matrix
    let kappa = b * first.dtn().row(0).sum();
    drop(first);

    let rows: Vec<StudyRow> = scenarios
        .par_iter()
        .enumerate()
        .map(|(k, (v, sc))| {
            let u0 = constant_initial(sc).unwrap_or(base_u0);
            let oracle = ode_blowup_time(&sc.g, kappa, u0).map_err(|e| e.to_string());
            let report = Problem::new(sc.clone()).map(|p| p.run());
            let dir = opts.out.join(format!("run_{k:03}"));
            let written = prepare_out(&dir).and_then(|()| match &report {
                Ok(r) => write_file(&dir, "trajectory.csv", &trajectory_csv(r)),
                Err(_) => Ok(()),
            });
            let status = match (report, written) {
                (Err(e), _) => TerminationStatus::Faulted { reason: e.to_string() },
                (Ok(_), Err(e)) => TerminationStatus::Faulted { reason: e.to_string() },
                (Ok(r), Ok(())) => r.status,
            };
            StudyRow {
                value: *v,
                status,
                oracle,
            }
        })
        .collect();

    let label = match sweep.parameter {
        SweepParameter::InitialValue => "u0",
        SweepParameter::Exponent => "exponent",
    };
    let mut csv = format!("{label},t_estimate,oracle_time,rel_error\n");
    let mut exit = EXIT_OK;
    let mut detail = Vec::new();
    for row in &rows {
        let t = row.status.blowup_time();
        let oracle = row.oracle.as_ref().ok().copied();
        let rel = match (t, oracle) {
            (Some(t), Some(o)) if o.is_finite() => Some((t - o).abs() / o),
            (None, Some(o)) if o.is_infinite() && matches!(row.status, TerminationStatus::Completed) => None,
            (Some(_), Some(_)) | (None, Some(_)) => Some(f64::INFINITY),
            _ => None,
        };
        let _ = writeln!(csv, "{},{},{},{}", num(row.value), opt_num(t), opt_num(oracle), opt_num(rel));
        exit = exit.max(match row.status {
            TerminationStatus::Faulted { .. } => EXIT_FAULTED,
            TerminationStatus::NonContraction { .. } => EXIT_NON_CONTRACTION,
            _ => EXIT_OK,
        });
        detail.push(json!({
            label: row.value,
            "termination": row.status,
            "oracle": row.oracle.as_ref().map_or_else(|e| json!({ "error": e }), |o| json!(num(*o))),
        }));
    }
    write_file(&opts.out, "blowup.csv", &csv)?;
    let status = match exit {
        EXIT_OK => "Completed",
        EXIT_NON_CONTRACTION => "NonContraction",
        _ => "Faulted",
    };
    manifest.write(status, json!({ "kappa": kappa, "runs": detail }))?;
    Ok(Outcome {
        status: status.into(),
        exit_code: exit,
    })
}

pub fn cmd_convergence(config: &Config, opts: &Options) -> Result<Outcome, CliError> {
    prepare_out(&opts.out)?;
    let manifest = Manifest::new("convergence", opts, Some(&config.scenario));
    let problem = build_problem(&manifest, &config.scenario, opts.strict)?;
    let report = problem.run();
    write_file(&opts.out, "trajectory.csv", &trajectory_csv(&report))?;
    let mut detail = run_detail(&report);
    if report.status != TerminationStatus::Completed {
        detail["convergence"] = json!({ "error": "run did not complete" });
    } else {
        match convergence_report(problem.grid(), &report.trajectory) {
            Ok(c) => {
                let mut csv = String::from("t,distance\n");
                for (t, d) in &c.distances {
                    let _ = writeln!(csv, "{},{}", num(*t), num(*d));
                }
                write_file(&opts.out, "convergence.csv", &csv)?;
                let t0 = report.trajectory.samples[0].t;
                let mut csv = String::from("t,increment\n");
                for (k, v) in c.cauchy_tail.iter().enumerate() {
                    let _ = writeln!(csv, "{},{}", num(t0 + k as f64), num(*v));
                }
                write_file(&opts.out, "cauchy_tail.csv", &csv)?;
                let mut csv = String::from("model,exponent,fitted_rate,residual\n");
                match &c.fit {
                    Ok(fit) => {
                        let (model, exponent) = match fit.model {
                            RateModel::Exponential => ("exponential", None),
                            RateModel::AlgebraicLojasiewicz { exponent } => ("algebraic", Some(exponent)),
                        };
                        let _ = writeln!(
                            csv,
                            "{model},{},{},{}",
                            opt_num(exponent),
                            num(fit.fitted_rate),
                            num(fit.residual)
                        );
                        detail["convergence"] = json!({ "fit": fit });
                    }
                    Err(e) => detail["convergence"] = json!({ "error": e.to_string() }),
                }
                write_file(&opts.out, "convergence_fit.csv", &csv)?;
            }
            Err(e) => detail["convergence"] = json!({ "error": e.to_string() }),
        }
    }
    manifest.write(report.status.label(), detail)?;
    Ok(Outcome {
        status: report.status.label().into(),
        exit_code: exit_code(&report.status, opts.expect_blowup),
    })
}
