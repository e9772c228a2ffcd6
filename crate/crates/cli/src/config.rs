//! Flat `key = value` run configuration.
//!
//! Lines are `dotted.key = value`; `#` starts a comment. Every problem in a
//! file is collected before reporting, so one run shows them all.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use enclab_core::geometry::{enclosing_radius, validate_shell};
use enclab_core::heatsolver::SolverConfig;
use enclab_core::indicator::{Estimator, FitModel, FitOptions, PathSpec, ProbeConfig, SolverMode, WindowChoice};
use enclab_core::thermo::ElasticParams;
use enclab_core::{AxisBox, BallShape, BodySpec, InclusionSpec, Point, ShellSource};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

/// Spectral sweep: explicit `tau` range, or the default range derived from
/// the shell margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauGrid {
    Default { count: usize },
    Range { min: f64, max: f64, count: usize },
}

impl TauGrid {
    pub fn count(&self) -> usize {
        match *self {
            TauGrid::Default { count } | TauGrid::Range { count, .. } => count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermoSettings {
    pub params: ElasticParams,
    /// Range of `tau sqrt(rho/mu) (R1 - R_D)` for the rate check.
    pub scaled_min: f64,
    pub scaled_max: f64,
    /// Range of `tau R_D` for the touching-ball integral.
    pub lens_min: f64,
    pub lens_max: f64,
    pub count: usize,
    /// Observation times classified against the fitted rate.
    pub windows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub probe: ProbeConfig,
    pub taus: TauGrid,
    pub fit: FitOptions,
    /// Horizon and step count for flux and time-domain runs.
    pub t_end: f64,
    pub steps: usize,
    /// Sphere mesh resolution for ball bodies.
    pub mesh_resolution: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub oracle_cases: usize,
    pub thermo: ThermoSettings,
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Reader {
    entries: BTreeMap<String, Entry>,
    errors: Vec<String>,
}

impl Reader {
    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn parsed<T>(&mut self, key: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> Option<T> {
        let (v, line) = self.raw(key)?;
        match parse(&v) {
            Some(x) => Some(x),
            None => {
                self.errors.push(format!("{}: {key} = {v:?} is not {what}", loc(line)));
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        self.parsed(key, "a finite number", |v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
    }

    fn float_or(&mut self, key: &str, default: f64) -> f64 {
        self.float(key).unwrap_or(default)
    }

    fn count_or(&mut self, key: &str, default: usize) -> usize {
        self.parsed(key, "a non-negative integer", |v| v.parse::<usize>().ok()).unwrap_or(default)
    }

    fn point(&mut self, key: &str) -> Option<Point> {
        self.parsed(key, "three comma-separated numbers", |v| {
            let xs: Vec<f64> = v.split(',').map(|p| p.trim().parse::<f64>().ok()).collect::<Option<_>>()?;
            (xs.len() == 3 && xs.iter().all(|x| x.is_finite())).then(|| Point::new(xs[0], xs[1], xs[2]))
        })
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        self.parsed(key, "a comma-separated list of numbers", |v| {
            if v.trim().is_empty() {
                return Some(Vec::new());
            }
            v.split(',').map(|p| p.trim().parse::<f64>().ok().filter(|x| x.is_finite())).collect()
        })
    }

    fn word<'a>(&mut self, key: &str, choices: &[&'a str]) -> Option<&'a str> {
        let (v, line) = self.raw(key)?;
        match choices.iter().find(|c| **c == v) {
            Some(c) => Some(c),
            None => {
                self.errors.push(format!("{}: {key} = {v:?} must be one of {}", loc(line), choices.join(", ")));
                None
            }
        }
    }

    fn required<T>(&mut self, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && !self.entries.contains_key(key) {
            self.errors.push(format!("missing required key {key}"));
        }
        v
    }

    /// Flags keys that do not apply to the selected variant.
    fn reject(&mut self, keys: &[&str], reason: &str) {
        for k in keys {
            if let Some(e) = self.entries.get_mut(*k) {
                e.used = true;
                self.errors.push(format!("{}: {k} does not apply when {reason}", loc(e.line)));
            }
        }
    }
}

/// Overrides from the command line carry line number 0.
fn loc(line: usize) -> String {
    if line == 0 {
        "command line".into()
    } else {
        format!("line {line}")
    }
}

fn split_lines(text: &str) -> (BTreeMap<String, Entry>, Vec<String>) {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            errors.push(format!("line {line}: expected `key = value`, got {body:?}"));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_') {
            errors.push(format!("line {line}: malformed key {k:?}"));
            continue;
        }
        if let Some(prev) = entries.get(k) {
            errors.push(format!("line {line}: duplicate key {k} (first set on line {})", prev.line));
            continue;
        }
        entries.insert(k.to_string(), Entry { value: v.to_string(), line, used: false });
    }
    (entries, errors)
}

/// Parses and cross-validates a configuration, reporting every violation.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with(text, &[])
}

/// Like [`parse_config`], with `overrides` replacing (or adding) keys.
pub fn parse_config_with(text: &str, overrides: &[(&str, String)]) -> Result<RunConfig, ConfigError> {
    let (mut entries, errors) = split_lines(text);
    for (k, v) in overrides {
        entries.insert(k.to_string(), Entry { value: v.clone(), line: 0, used: false });
    }
    let mut rd = Reader { entries, errors };

    let body = match rd.word("body.kind", &["box", "ball"]).unwrap_or("box") {
        "ball" => {
            rd.reject(&["body.min", "body.max"], "body.kind = ball");
            let center = rd.point("body.center").unwrap_or(Point::ORIGIN);
            let radius = rd.float_or("body.radius", 1.0);
            BallShape::new(center, radius).map(BodySpec::Ball).map_err(|e| rd.errors.push(format!("body: {e}"))).ok()
        }
        _ => {
            rd.reject(&["body.center", "body.radius"], "body.kind = box");
            let min = rd.point("body.min").unwrap_or(Point::new(-1.0, -1.0, -1.0));
            let max = rd.point("body.max").unwrap_or(Point::new(1.0, 1.0, 1.0));
            AxisBox::new(min, max).map(BodySpec::Box).map_err(|e| rd.errors.push(format!("body: {e}"))).ok()
        }
    };

    let inclusion = match rd.word("inclusion.kind", &["ball", "none"]).unwrap_or("ball") {
        "none" => {
            rd.reject(&["inclusion.center", "inclusion.radius", "inclusion.h"], "inclusion.kind = none");
            Some(InclusionSpec::empty())
        }
        _ => {
            let center = rd.point("inclusion.center").unwrap_or(Point::ORIGIN);
            let radius = rd.float("inclusion.radius");
            let radius = rd.required("inclusion.radius", radius);
            let h = rd.float_or("inclusion.h", 1.0);
            radius.and_then(|r| {
                BallShape::new(center, r)
                    .and_then(|b| InclusionSpec::ball(b, h))
                    .map_err(|e| rd.errors.push(format!("inclusion: {e}")))
                    .ok()
            })
        }
    };

    let p = rd.point("shell.p").unwrap_or(Point::ORIGIN);
    let r1 = rd.float("shell.r1");
    let r1 = rd.required("shell.r1", r1);
    let r2 = rd.float("shell.r2");
    let r2 = rd.required("shell.r2", r2);
    let shell = match (r1, r2) {
        (Some(r1), Some(r2)) => ShellSource::new(p, r1, r2).map_err(|e| rd.errors.push(format!("shell: {e}"))).ok(),
        _ => None,
    };

    let default_mode = if matches!(body, Some(BodySpec::Ball(_))) { "radial" } else { "grid" };
    let solver_cfg = SolverConfig {
        tol: rd.float_or("solver.tol", SolverConfig::default().tol),
        max_iter: rd.count_or("solver.max_iter", SolverConfig::default().max_iter),
    };
    if let Err(e) = solver_cfg.validate() {
        rd.errors.push(format!("solver: {e}"));
    }
    let mode = match rd.word("solver.mode", &["radial", "grid"]).unwrap_or(default_mode) {
        "radial" => {
            rd.reject(&["grid.n"], "solver.mode = radial");
            SolverMode::Radial { n_cells: rd.count_or("solver.cells", 4000) }
        }
        _ => {
            rd.reject(&["solver.cells"], "solver.mode = grid");
            SolverMode::Grid { n: rd.count_or("grid.n", 64), config: solver_cfg }
        }
    };

    let t_end = rd.float_or("time.t_end", 1.0);
    let steps = rd.count_or("time.steps", 2000);
    if !(t_end > 0.0) {
        rd.errors.push(format!("time.t_end = {t_end} must be positive"));
    }
    if steps < 2 {
        rd.errors.push(format!("time.steps = {steps} must be at least 2"));
    }
    let path = match rd.word("path", &["elliptic", "timedomain"]).unwrap_or("elliptic") {
        "timedomain" => PathSpec::TimeDomain { t_end, n_steps: steps },
        _ => PathSpec::Elliptic,
    };
    let estimator = match rd.word("estimator", &["contrast", "boundary"]).unwrap_or("contrast") {
        "boundary" => Estimator::Boundary,
        _ => Estimator::Contrast,
    };

    let count = rd.count_or("tau.count", 12);
    let taus = match (rd.float("tau.min"), rd.float("tau.max")) {
        (None, None) => TauGrid::Default { count },
        (Some(min), Some(max)) => TauGrid::Range { min, max, count },
        _ => {
            rd.errors.push("tau.min and tau.max must be given together".into());
            TauGrid::Default { count }
        }
    };
    if let Err(e) = check_taus(&taus) {
        rd.errors.push(e);
    }

    let model = match rd.word("fit.model", &["affine", "prefactor"]).unwrap_or("affine") {
        "prefactor" => FitModel::Prefactor,
        _ => FitModel::Affine,
    };
    let window = match (rd.float("fit.s_min"), rd.float("fit.s_max")) {
        (None, None) => WindowChoice::Auto,
        (Some(s_min), Some(s_max)) if s_min < s_max => WindowChoice::Explicit { s_min, s_max },
        (Some(_), Some(_)) => {
            rd.errors.push("fit.s_min must be below fit.s_max".into());
            WindowChoice::Auto
        }
        _ => {
            rd.errors.push("fit.s_min and fit.s_max must be given together".into());
            WindowChoice::Auto
        }
    };
    let fit = FitOptions {
        model,
        window,
        noise_floor: rd.float_or("fit.noise_floor", 0.0),
        min_points: rd.count_or("fit.min_points", 4),
    };

    let mesh_resolution = rd.count_or("mesh.resolution", 16);
    let out_dir = PathBuf::from(rd.raw("output.dir").map(|v| v.0).unwrap_or_else(|| "out".into()));
    let seed = rd.parsed("seed", "an unsigned integer", |v| v.parse::<u64>().ok()).unwrap_or(1);
    let oracle_cases = rd.count_or("oracles.cases", 100);

    let unit = ElasticParams::unit();
    let params = ElasticParams {
        rho: rd.float_or("thermo.rho", unit.rho),
        mu: rd.float_or("thermo.mu", unit.mu),
        lambda: rd.float_or("thermo.lambda", unit.lambda),
        m: rd.float_or("thermo.m", unit.m),
        c: rd.float_or("thermo.c", unit.c),
        k: rd.float_or("thermo.k", unit.k),
        theta0: rd.float_or("thermo.theta0", unit.theta0),
    };
    if let Err(e) = params.validate() {
        rd.errors.push(format!("thermo: {e}"));
    }
    let mut thermo = ThermoSettings {
        params,
        scaled_min: rd.float_or("thermo.scaled_min", 20.0),
        scaled_max: rd.float_or("thermo.scaled_max", 100.0),
        lens_min: rd.float_or("thermo.lens_min", 50.0),
        lens_max: rd.float_or("thermo.lens_max", 200.0),
        count: rd.count_or("thermo.count", 12),
        windows: Vec::new(),
    };
    let windows = rd.list("thermo.windows");
    if !(0.0 < thermo.scaled_min && thermo.scaled_min < thermo.scaled_max) {
        rd.errors.push("thermo.scaled_min must be positive and below thermo.scaled_max".into());
    }
    if !(0.0 < thermo.lens_min && thermo.lens_min < thermo.lens_max) {
        rd.errors.push("thermo.lens_min must be positive and below thermo.lens_max".into());
    }
    if thermo.count < 4 {
        rd.errors.push(format!("thermo.count = {} must be at least 4", thermo.count));
    }

    let unknown: Vec<(String, usize)> =
        rd.entries.iter().filter(|(_, e)| !e.used).map(|(k, e)| (k.clone(), e.line)).collect();
    for (k, line) in unknown {
        rd.errors.push(format!("{}: unknown key {k}", loc(line)));
    }

    let (Some(body), Some(inclusion), Some(shell)) = (body, inclusion, shell) else {
        return Err(ConfigError { errors: rd.errors });
    };
    let probe = ProbeConfig { body, inclusion, shell, mode, path, estimator };
    cross_validate(&probe, &mut rd.errors);
    thermo.windows = match windows {
        Some(w) => w,
        None => default_windows(&probe, &thermo.params),
    };
    if thermo.windows.iter().any(|t| !(*t > 0.0)) {
        rd.errors.push("thermo.windows entries must be positive".into());
    }
    if !rd.errors.is_empty() {
        return Err(ConfigError { errors: rd.errors });
    }
    Ok(RunConfig { probe, taus, fit, t_end, steps, mesh_resolution, out_dir, seed, oracle_cases, thermo })
}

fn check_taus(taus: &TauGrid) -> Result<(), String> {
    let count = taus.count();
    if count < 2 {
        return Err(format!("tau.count = {count} must be at least 2"));
    }
    if let TauGrid::Range { min, max, .. } = *taus {
        if !(min > 0.0) {
            return Err(format!("tau.min = {min} must be positive"));
        }
        if !(max > min) {
            return Err(format!("tau.max = {max} must exceed tau.min = {min}"));
        }
    }
    Ok(())
}

fn cross_validate(probe: &ProbeConfig, errors: &mut Vec<String>) {
    if let Err(e) = validate_shell(&probe.body, &probe.shell) {
        errors.push(format!("shell: {e}"));
    }
    if !probe.inclusion.is_empty() {
        if let Err(e) = probe.inclusion.validate_inside(&probe.body, 0.0) {
            errors.push(format!("inclusion: {e}"));
        }
    }
    match (probe.mode, &probe.body) {
        (SolverMode::Radial { n_cells }, BodySpec::Ball(b)) => {
            let off = |c: Point| c.dist(b.center) > 1e-12 * b.radius;
            if off(probe.shell.p) || probe.inclusion.balls.iter().any(|i| off(i.center)) {
                errors.push("solver.mode = radial needs the shell and inclusion centred on the body".into());
            }
            if n_cells < 16 {
                errors.push(format!("solver.cells = {n_cells} must be at least 16"));
            }
        }
        (SolverMode::Radial { .. }, BodySpec::Box(_)) => {
            errors.push("solver.mode = radial needs body.kind = ball".into());
        }
        (SolverMode::Grid { .. }, BodySpec::Ball(_)) => {
            errors.push("solver.mode = grid needs body.kind = box".into());
        }
        (SolverMode::Grid { n, .. }, BodySpec::Box(_)) => {
            if n < 4 {
                errors.push(format!("grid.n = {n} must be at least 4"));
            }
        }
    }
}

/// Observation times on either side of `2 sqrt(rho/mu) (R1 - R_D)`.
fn default_windows(probe: &ProbeConfig, params: &ElasticParams) -> Vec<f64> {
    if probe.inclusion.is_empty() {
        return Vec::new();
    }
    match enclosing_radius(&probe.inclusion.shape(), probe.shell.p) {
        Ok(r_d) if r_d < probe.shell.r1 => {
            let threshold = 2.0 * params.slowness() * (probe.shell.r1 - r_d);
            vec![0.875 * threshold, 1.25 * threshold]
        }
        _ => Vec::new(),
    }
}

fn pt(p: Point) -> String {
    format!("{}, {}, {}", p.x, p.y, p.z)
}

/// Canonical text of the effective configuration; parses back to `cfg`.
pub fn render_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    let probe = &cfg.probe;
    match &probe.body {
        BodySpec::Box(b) => {
            kv("body.kind", "box".into());
            kv("body.min", pt(b.min));
            kv("body.max", pt(b.max));
        }
        BodySpec::Ball(b) => {
            kv("body.kind", "ball".into());
            kv("body.center", pt(b.center));
            kv("body.radius", b.radius.to_string());
        }
    }
    match probe.inclusion.balls.first() {
        Some(b) => {
            kv("inclusion.kind", "ball".into());
            kv("inclusion.center", pt(b.center));
            kv("inclusion.radius", b.radius.to_string());
            kv("inclusion.h", probe.inclusion.h.to_string());
        }
        None => kv("inclusion.kind", "none".into()),
    }
    kv("shell.p", pt(probe.shell.p));
    kv("shell.r1", probe.shell.r1.to_string());
    kv("shell.r2", probe.shell.r2.to_string());
    match probe.mode {
        SolverMode::Radial { n_cells } => {
            kv("solver.mode", "radial".into());
            kv("solver.cells", n_cells.to_string());
        }
        SolverMode::Grid { n, config } => {
            kv("solver.mode", "grid".into());
            kv("grid.n", n.to_string());
            kv("solver.tol", config.tol.to_string());
            kv("solver.max_iter", config.max_iter.to_string());
        }
    }
    kv("path", match probe.path {
        PathSpec::Elliptic => "elliptic".into(),
        PathSpec::TimeDomain { .. } => "timedomain".into(),
    });
    kv("estimator", match probe.estimator {
        Estimator::Contrast => "contrast".into(),
        Estimator::Boundary => "boundary".into(),
    });
    kv("time.t_end", cfg.t_end.to_string());
    kv("time.steps", cfg.steps.to_string());
    if let TauGrid::Range { min, max, .. } = cfg.taus {
        kv("tau.min", min.to_string());
        kv("tau.max", max.to_string());
    }
    kv("tau.count", cfg.taus.count().to_string());
    kv("fit.model", match cfg.fit.model {
        FitModel::Affine => "affine".into(),
        FitModel::Prefactor => "prefactor".into(),
    });
    if let WindowChoice::Explicit { s_min, s_max } = cfg.fit.window {
        kv("fit.s_min", s_min.to_string());
        kv("fit.s_max", s_max.to_string());
    }
    kv("fit.noise_floor", cfg.fit.noise_floor.to_string());
    kv("fit.min_points", cfg.fit.min_points.to_string());
    kv("mesh.resolution", cfg.mesh_resolution.to_string());
    kv("output.dir", cfg.out_dir.display().to_string());
    kv("seed", cfg.seed.to_string());
    kv("oracles.cases", cfg.oracle_cases.to_string());
    let t = &cfg.thermo;
    let p = &t.params;
    for (k, v) in [
        ("thermo.rho", p.rho),
        ("thermo.mu", p.mu),
        ("thermo.lambda", p.lambda),
        ("thermo.m", p.m),
        ("thermo.c", p.c),
        ("thermo.k", p.k),
        ("thermo.theta0", p.theta0),
        ("thermo.scaled_min", t.scaled_min),
        ("thermo.scaled_max", t.scaled_max),
        ("thermo.lens_min", t.lens_min),
        ("thermo.lens_max", t.lens_max),
    ] {
        kv(k, v.to_string());
    }
    kv("thermo.count", t.count.to_string());
    kv("thermo.windows", t.windows.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(", "));
    s
}
