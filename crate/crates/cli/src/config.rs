//! Scenario files.
//!
//! A scenario is a small INI-style text file:
//!
//! ```text
//! # comment
//! [geometry]
//! kind = strip          # strip | interval
//! length = 6.283185307179586
//! nx = 64
//! ny = 256
//!
//! [coefficients]
//! lambda = 1.0
//! d = 1.0
//! b = 1.0
//! delta_surface = none  # none | constant | quasilinear
//! delta0 = 1.0
//! delta1 = 0.5
//!
//! [nonlinearity.f]
//! family = zero         # zero | linear | bounded_smooth
//!
//! [nonlinearity.g]
//! family = power_law    # + damped_power | bistable
//! rho = 1.0
//! q = 2.0
//!
//! [initial]
//! kind = constant       # constant | profile
//! value = 1.0
//!
//! [solver]
//! t_end = 10.0
//!
//! [output]
//! stride = 1
//! eigenvalues = 5
//! ```
//!
//! Keys are lowercase snake case and parsing is strict: an unknown
//! section or key, a repeated key, or a key that does not belong to the
//! selected family is an error reported with its line number.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use dynbc_core::dynamics::{BoundaryCoefficient, DomainCoefficient, InitialSpec, Scenario, SolverConfig};
use dynbc_core::grid::{build_grid, GeometrySpec};
use dynbc_core::nonlinearity::{DiffusivitySpec, Family, FunctionSpec, Role};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message} (key `{key}`)")]
    Parse { line: usize, key: String, message: String },
    #[error("{0}")]
    Validation(String),
}

/// Output options that are not part of the physical scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputOptions {
    /// Number of eigenvalues written by `spectrum`.
    pub eigenvalues: usize,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self { eigenvalues: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub output: OutputOptions,
}

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
}

type Sections = BTreeMap<String, (usize, BTreeMap<String, Entry>)>;

const SECTIONS: &[&str] = &[
    "geometry",
    "coefficients",
    "nonlinearity.f",
    "nonlinearity.g",
    "initial",
    "solver",
    "output",
];

fn parse_err(line: usize, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn is_key(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.')
}

fn tokenize(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line, content, "unterminated section header"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(parse_err(line, name, "unknown section"));
            }
            if sections.contains_key(name) {
                return Err(parse_err(line, name, "section appears twice"));
            }
            sections.insert(name.to_string(), (line, BTreeMap::new()));
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, content, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if !is_key(key) {
            return Err(parse_err(line, key, "keys are lowercase snake case"));
        }
        let section = current
            .as_ref()
            .ok_or_else(|| parse_err(line, key, "key outside of any section"))?;
        let entries = &mut sections.get_mut(section).expect("section exists").1;
        if entries.contains_key(key) {
            return Err(parse_err(line, key, "key appears twice"));
        }
        entries.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(sections)
}

/// Typed access to one section; records which keys were consumed.
struct Section<'a> {
    name: &'a str,
    header_line: usize,
    entries: Option<&'a BTreeMap<String, Entry>>,
    allowed: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn new(sections: &'a Sections, name: &'a str) -> Self {
        let found = sections.get(name);
        Self {
            name,
            header_line: found.map_or(0, |s| s.0),
            entries: found.map(|s| &s.1),
            allowed: Vec::new(),
        }
    }

    fn present(&self) -> bool {
        self.entries.is_some()
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Entry> {
        self.allowed.push(key);
        self.entries.and_then(|e| e.get(key))
    }

    fn missing(&self, key: &str) -> ConfigError {
        parse_err(
            self.header_line,
            key,
            format!("missing required key in [{}]", self.name),
        )
    }

    fn string(&mut self, key: &'static str) -> Option<(usize, &'a str)> {
        self.raw(key).map(|e| (e.line, e.value.as_str()))
    }

    fn req_string(&mut self, key: &'static str) -> Result<(usize, &'a str), ConfigError> {
        self.string(key).ok_or_else(|| self.missing(key))
    }

    fn real(&mut self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => {
                let v: f64 = e
                    .value
                    .parse()
                    .map_err(|_| parse_err(e.line, key, format!("`{}` is not a decimal number", e.value)))?;
                if !v.is_finite() {
                    return Err(parse_err(e.line, key, "value must be finite"));
                }
                Ok(Some(v))
            }
        }
    }

    fn req_real(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        self.real(key)?.ok_or_else(|| self.missing(key))
    }

    fn real_or(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.real(key)?.unwrap_or(default))
    }

    fn count(&mut self, key: &'static str) -> Result<Option<usize>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| parse_err(e.line, key, format!("`{}` is not a nonnegative integer", e.value))),
        }
    }

    fn boolean(&mut self, key: &'static str) -> Result<Option<bool>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => match e.value.as_str() {
                "true" => Ok(Some(true)),
                "false" => Ok(Some(false)),
                other => Err(parse_err(e.line, key, format!("`{other}` is not true or false"))),
            },
        }
    }

    /// Reject every key that was not requested.
    fn finish(self) -> Result<(), ConfigError> {
        if let Some(entries) = self.entries {
            let mut unknown: Vec<(&String, &Entry)> =
                entries.iter().filter(|(k, _)| !self.allowed.contains(&k.as_str())).collect();
            unknown.sort_by_key(|(_, e)| e.line);
            if let Some((k, e)) = unknown.first() {
                return Err(parse_err(e.line, k, format!("unknown key in [{}]", self.name)));
            }
        }
        Ok(())
    }
}

fn geometry(sections: &Sections) -> Result<GeometrySpec, ConfigError> {
    let mut s = Section::new(sections, "geometry");
    if !s.present() {
        return Err(ConfigError::Validation("missing required section [geometry]".into()));
    }
    let (line, kind) = s.req_string("kind")?;
    let ny = s.count("ny")?.ok_or_else(|| s.missing("ny"))?;
    let spec = match kind {
        "interval" => GeometrySpec::interval(ny),
        "strip" => {
            let nx = s.count("nx")?.ok_or_else(|| s.missing("nx"))?;
            let length = s.real_or("length", 2.0 * PI)?;
            GeometrySpec::strip(length, nx, ny)
        }
        other => return Err(parse_err(line, "kind", format!("unknown geometry `{other}`"))),
    };
    s.finish()?;
    Ok(spec)
}

fn family(sections: &Sections, name: &str, role: Role) -> Result<FunctionSpec, ConfigError> {
    let mut s = Section::new(sections, name);
    if !s.present() {
        return Ok(FunctionSpec::zero(role));
    }
    let (line, kind) = s.req_string("family")?;
    let fam = match kind {
        "zero" => Family::Zero,
        "linear" => Family::Linear { a: s.req_real("a")? },
        "bounded_smooth" => Family::BoundedSmooth {
            c: s.req_real("c")?,
            s0: s.real_or("s0", 1.0)?,
        },
        "power_law" => Family::PowerLaw {
            rho: s.req_real("rho")?,
            q: s.req_real("q")?,
        },
        "damped_power" => Family::DampedPower {
            rho: s.req_real("rho")?,
            q: s.req_real("q")?,
            a: s.req_real("a")?,
        },
        "bistable" => Family::Bistable { a: s.real_or("a", 1.0)? },
        other => return Err(parse_err(line, "family", format!("unknown family `{other}`"))),
    };
    s.finish()?;
    FunctionSpec::new(fam, role).map_err(|e| ConfigError::Validation(format!("[{name}] {e}")))
}

/// Parse and validate scenario text.
pub fn parse_str(text: &str) -> Result<Config, ConfigError> {
    let sections = tokenize(text)?;
    let geometry = geometry(&sections)?;

    let mut c = Section::new(&sections, "coefficients");
    if !c.present() {
        return Err(ConfigError::Validation("missing required section [coefficients]".into()));
    }
    let lambda = c.req_real("lambda")?;
    let d = c.real_or("d", 1.0)?;
    let b = c.real_or("b", 1.0)?;
    let delta = match c.string("delta_surface") {
        None | Some((_, "none")) => DiffusivitySpec::ZeroSurface,
        Some((_, "constant")) => DiffusivitySpec::Constant {
            delta0: c.req_real("delta0")?,
        },
        Some((_, "quasilinear")) => DiffusivitySpec::Quasilinear {
            delta0: c.req_real("delta0")?,
            delta1: c.req_real("delta1")?,
        },
        Some((line, other)) => {
            return Err(parse_err(line, "delta_surface", format!("unknown surface diffusion `{other}`")))
        }
    };
    c.finish()?;

    let f = family(&sections, "nonlinearity.f", Role::InteriorF)?;
    let g = family(&sections, "nonlinearity.g", Role::BoundaryG)?;

    let mut i = Section::new(&sections, "initial");
    let u0 = match if i.present() { i.req_string("kind")? } else { (0, "constant") } {
        (_, "constant") => InitialSpec::constant(i.real_or("value", 0.0)?),
        (_, "profile") => {
            let mode = i.count("mode")?.unwrap_or(1);
            InitialSpec::Profile {
                bottom: i.req_real("bottom")?,
                top: i.req_real("top")?,
                amplitude: i.real_or("amplitude", 0.0)?,
                mode: u32::try_from(mode).map_err(|_| ConfigError::Validation("mode is too large".into()))?,
            }
        }
        (line, other) => return Err(parse_err(line, "kind", format!("unknown initial data `{other}`"))),
    };
    i.finish()?;

    let mut solver = SolverConfig::default();
    let mut s = Section::new(&sections, "solver");
    solver.dt0 = s.real_or("dt0", solver.dt0)?;
    solver.dt_min = s.real_or("dt_min", solver.dt_min)?;
    solver.dt_max = s.real_or("dt_max", solver.dt_max)?;
    solver.fixed_point_tol = s.real_or("fixed_point_tol", solver.fixed_point_tol)?;
    solver.max_picard = s.count("max_picard")?.unwrap_or(solver.max_picard);
    solver.blowup_threshold = s.real_or("blowup_threshold", solver.blowup_threshold)?;
    solver.t_end = s.real_or("t_end", solver.t_end)?;
    solver.adaptive = s.boolean("adaptive")?.unwrap_or(solver.adaptive);
    s.finish()?;

    let mut output = OutputOptions::default();
    let mut o = Section::new(&sections, "output");
    solver.output_stride = o.count("stride")?.unwrap_or(solver.output_stride);
    output.eigenvalues = o.count("eigenvalues")?.unwrap_or(output.eigenvalues);
    o.finish()?;
    if output.eigenvalues == 0 {
        return Err(ConfigError::Validation("eigenvalues must be at least 1".into()));
    }

    let scenario = Scenario {
        geometry,
        lambda,
        d: DomainCoefficient::Constant(d),
        delta,
        b: BoundaryCoefficient::Constant(b),
        f,
        g,
        u0,
        solver,
    };
    let grid = build_grid(geometry).map_err(|e| ConfigError::Validation(e.to_string()))?;
    scenario
        .validate(&grid)
        .map_err(|e| ConfigError::Validation(e.to_string()))?;
    if d <= 0.0 {
        return Err(ConfigError::Validation(format!("d must be positive, got {d}")));
    }
    Ok(Config { scenario, output })
}

pub fn parse_scenario(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_str(&text)
}
