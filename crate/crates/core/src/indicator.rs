//! Indicator assembly over a sweep of spectral parameters, extraction of
//! the enclosing radius from its exponential rate, and sign classification.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{validate_shell, BodySpec, BoundaryMesh, GeometryError, InclusionSpec, ShellSource};
use crate::heatsolver::{
    grid_mesh, reference_field, solve_heat_twin, solve_helmholtz_perturbation, Grid, MediumField, RadialSetup,
    SolverConfig, SolverError,
};
use crate::potentials::{PotentialError, SpectralParam, W00};
use crate::shellflux::{flux_on_boundary, laplace_rows, FluxError, TimeGrid};

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error("trace lengths differ from the mesh: {0}")]
    MeshMismatch(String),
    #[error("indicator at noise floor: increase grid resolution or reduce τ range")]
    NoiseFloor,
    #[error("fit needs at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("spectral parameters must be positive and strictly increasing")]
    TauGrid,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// `sum_i weight_i (w0_i - w_i) d_nu w0_i`.
pub fn indicator_value(w0: &[f64], w: &[f64], dnu_w0: &[f64], mesh: &BoundaryMesh) -> Result<f64, IndicatorError> {
    if w0.len() != mesh.len() || w.len() != mesh.len() || dnu_w0.len() != mesh.len() {
        return Err(IndicatorError::MeshMismatch(format!(
            "mesh {} nodes, traces {}/{}/{}",
            mesh.len(),
            w0.len(),
            w.len(),
            dnu_w0.len()
        )));
    }
    Ok(mesh
        .nodes
        .iter()
        .zip(w0.iter().zip(w))
        .zip(dnu_w0)
        .map(|((n, (a, b)), g)| n.weight * (a - b) * g)
        .sum())
}

/// Same quadrature with the gap `w0 - w` given directly.
fn gap_indicator(gap: &[f64], dnu_w0: &[f64], mesh: &BoundaryMesh) -> f64 {
    mesh.nodes.iter().zip(gap).zip(dnu_w0).map(|((n, d), g)| n.weight * d * g).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    TimeDomain,
    Elliptic,
}

impl fmt::Display for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathKind::TimeDomain => "timedomain",
            PathKind::Elliptic => "elliptic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorRecord {
    pub tau: f64,
    pub s: f64,
    pub value: f64,
    /// Estimated absolute error level below which `value` is not trusted.
    pub floor: f64,
    pub path: PathKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndicatorSeries {
    /// Successful points, increasing in `tau`.
    pub records: Vec<IndicatorRecord>,
    /// `(tau, message)` for points whose solve failed.
    pub failures: Vec<(f64, String)>,
}

impl IndicatorSeries {
    /// Builds a series from exact values (no floor), e.g. for fit checks.
    pub fn from_values(pairs: &[(f64, f64)], path: PathKind) -> Self {
        let records = pairs
            .iter()
            .map(|&(tau, value)| IndicatorRecord { tau, s: tau.sqrt(), value, floor: 0.0, path })
            .collect();
        Self { records, failures: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "tau,sqrt_tau,indicator,log_abs_indicator,path")?;
        for r in &self.records {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.tau,
                r.s,
                r.value,
                r.value.abs().ln(),
                r.path
            )?;
        }
        Ok(())
    }
}

/// How the forward field is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverMode {
    /// Tridiagonal solve on spherical shells (concentric configurations).
    Radial { n_cells: usize },
    /// Finite volumes on an `n^3` box grid.
    Grid { n: usize, config: SolverConfig },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathSpec {
    /// Direct Laplace-domain solve per `tau`.
    Elliptic,
    /// Heat stepping on `[0, T]`, then Laplace transforms of boundary data.
    TimeDomain { t_end: f64, n_steps: usize },
}

/// Which quadrature of the indicator an elliptic solve reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// Discrete `int_D h grad w0 . grad w` over the faces where the
    /// conductivity jumps. It equals the boundary quadrature with Neumann
    /// data consistent with the discrete reference field.
    #[default]
    Contrast,
    /// Boundary quadrature with the analytic normal derivative of `w0`.
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub body: BodySpec,
    pub inclusion: InclusionSpec,
    pub shell: ShellSource,
    pub mode: SolverMode,
    pub path: PathSpec,
    pub estimator: Estimator,
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<f64, IndicatorError> {
        let margin = validate_shell(&self.body, &self.shell)?;
        if !self.inclusion.is_empty() {
            self.inclusion.validate_inside(&self.body, 0.0)?;
        }
        Ok(margin)
    }

    /// Same configuration without the inclusion.
    pub fn empty_twin(&self) -> Self {
        Self { inclusion: InclusionSpec::empty(), ..self.clone() }
    }

    pub fn translated(&self, v: crate::geometry::Point) -> Self {
        Self {
            body: self.body.translated(v),
            inclusion: self.inclusion.translated(v),
            shell: self.shell.translated(v),
            ..self.clone()
        }
    }
}

/// `count` values of `tau` with `sqrt(tau)` log-spaced on `[lo, hi]`.
pub fn log_spaced_taus(s_lo: f64, s_hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![s_lo * s_lo];
    }
    (0..count)
        .map(|i| {
            let s = s_lo * (s_hi / s_lo).powf(i as f64 / (count - 1) as f64);
            s * s
        })
        .collect()
}

/// Default sweep: `sqrt(tau)` from `4/(R1 - R_Omega)` to `24/(R1 - R_Omega)`.
/// On a box grid the top is capped at `1/h` so the stencil resolves the
/// decay length.
pub fn default_taus(config: &ProbeConfig, count: usize) -> Result<Vec<f64>, IndicatorError> {
    let margin = config.validate()?;
    let lo = 4.0 / margin;
    let mut hi = 24.0 / margin;
    if let SolverMode::Grid { n, .. } = config.mode {
        let grid = Grid::for_body(&config.body, n)?;
        let hmax = grid.h.iter().cloned().fold(0.0, f64::max);
        hi = hi.min(1.0 / hmax);
    }
    let lo = lo.min(0.5 * hi);
    Ok(log_spaced_taus(lo, hi, count))
}

fn check_taus(taus: &[f64]) -> Result<(), IndicatorError> {
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) || taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(IndicatorError::TauGrid);
    }
    Ok(())
}

/// Relative error level assigned to a direct tridiagonal solve.
const DIRECT_SOLVE_REL: f64 = 1e-14;
/// Floors are this multiple of the estimated error.
const FLOOR_FACTOR: f64 = 10.0;

type PointResult = Result<(f64, f64), IndicatorError>;

/// Evaluates `I(tau)` for each entry of `taus`. Failed points are listed
/// in [`IndicatorSeries::failures`]; setup errors are returned directly.
pub fn tau_sweep(config: &ProbeConfig, taus: &[f64]) -> Result<IndicatorSeries, IndicatorError> {
    check_taus(taus)?;
    config.validate()?;
    let kind = match config.path {
        PathSpec::Elliptic => PathKind::Elliptic,
        PathSpec::TimeDomain { .. } => PathKind::TimeDomain,
    };
    let points: Vec<PointResult> = match (config.mode, config.path) {
        (SolverMode::Radial { n_cells }, PathSpec::Elliptic) => {
            let setup = RadialSetup::new(&config.body, &config.inclusion, &config.shell, n_cells)?;
            taus.par_iter().map(|&tau| radial_elliptic_point(&setup, tau, config.estimator)).collect()
        }
        (SolverMode::Radial { n_cells }, PathSpec::TimeDomain { t_end, n_steps }) => {
            let setup = RadialSetup::new(&config.body, &config.inclusion, &config.shell, n_cells)?;
            radial_time_points(&setup, TimeGrid::new(t_end, n_steps)?, taus)?
        }
        (SolverMode::Grid { n, config: cfg }, PathSpec::Elliptic) => {
            let grid = Grid::for_body(&config.body, n)?;
            let mesh = grid_mesh(&config.body, &grid)?;
            let medium = MediumField::from_inclusion(&grid, &config.inclusion);
            taus.par_iter()
                .map(|&tau| grid_elliptic_point(&grid, &mesh, &medium, &config.shell, tau, &cfg, config.estimator))
                .collect()
        }
        (SolverMode::Grid { n, config: cfg }, PathSpec::TimeDomain { t_end, n_steps }) => {
            let grid = Grid::for_body(&config.body, n)?;
            let mesh = grid_mesh(&config.body, &grid)?;
            let medium = MediumField::from_inclusion(&grid, &config.inclusion);
            grid_time_points(config, &grid, mesh, &medium, TimeGrid::new(t_end, n_steps)?, taus, &cfg)?
        }
    };
    let mut series = IndicatorSeries::default();
    for (&tau, p) in taus.iter().zip(points) {
        match p {
            Ok((value, floor)) if value.is_finite() => {
                series.records.push(IndicatorRecord { tau, s: tau.sqrt(), value, floor, path: kind })
            }
            Ok((value, _)) => series.failures.push((tau, format!("non-finite indicator {value}"))),
            Err(e) => series.failures.push((tau, e.to_string())),
        }
    }
    Ok(series)
}

fn radial_elliptic_point(setup: &RadialSetup, tau: f64, est: Estimator) -> PointResult {
    let r = setup.elliptic_perturbation(tau)?;
    let value = match est {
        Estimator::Contrast => r.contrast_form,
        Estimator::Boundary => r.boundary_form,
    };
    let floor = FLOOR_FACTOR * DIRECT_SOLVE_REL * (setup.n_cells as f64).sqrt() * value.abs();
    Ok((value, floor))
}

fn grid_elliptic_point(
    grid: &Grid,
    mesh: &Arc<BoundaryMesh>,
    medium: &MediumField,
    shell: &ShellSource,
    tau: f64,
    cfg: &SolverConfig,
    est: Estimator,
) -> PointResult {
    let w00 = W00::new(*shell, SpectralParam::from_tau(tau)?);
    let reference = reference_field(grid, mesh, &w00)?;
    let pert = solve_helmholtz_perturbation(grid, medium, tau, mesh, &reference.cells, cfg)?;
    let gap: Vec<f64> = pert.trace.iter().map(|e| -e).collect();
    let boundary = gap_indicator(&gap, &reference.normal_deriv, mesh);
    let value = match est {
        Estimator::Contrast => pert.contrast_form,
        Estimator::Boundary => boundary,
    };
    // CG leaves a residual of relative size `stats.residual` in the response
    let floor = FLOOR_FACTOR * pert.stats.residual.max(f64::EPSILON) * value.abs();
    Ok((value, floor))
}

fn radial_time_points(setup: &RadialSetup, tg: TimeGrid, taus: &[f64]) -> Result<Vec<PointResult>, IndicatorError> {
    let run = TimeDomainRun::Radial { series: setup.time_domain(tg)?, area: setup.boundary_area(), n_cells: setup.n_cells };
    Ok(run.points(taus, tg.n_steps))
}

fn grid_time_points(
    config: &ProbeConfig,
    grid: &Grid,
    mesh: Arc<BoundaryMesh>,
    medium: &MediumField,
    tg: TimeGrid,
    taus: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<PointResult>, IndicatorError> {
    let run = grid_time_run(config, grid, mesh, medium, tg, cfg)?;
    Ok(run.points(taus, tg.n_steps))
}

fn grid_time_run(
    config: &ProbeConfig,
    grid: &Grid,
    mesh: Arc<BoundaryMesh>,
    medium: &MediumField,
    tg: TimeGrid,
    cfg: &SolverConfig,
) -> Result<TimeDomainRun, IndicatorError> {
    let flux = flux_on_boundary(&config.body, mesh.clone(), tg, &config.shell)?;
    let twin = solve_heat_twin(grid, medium, &flux, cfg)?;
    Ok(TimeDomainRun::Grid { flux_values: flux.values, perturbation: twin.perturbation.values, mesh, grid: tg, tol: cfg.tol })
}

/// Boundary data of one time-domain simulation. The indicator can be
/// formed from any leading part `[0, k dt]` of the record, so one run
/// serves several observation horizons.
#[derive(Debug, Clone)]
pub enum TimeDomainRun {
    Radial { series: crate::heatsolver::RadialTimeSeries, area: f64, n_cells: usize },
    Grid { flux_values: Vec<f64>, perturbation: Vec<f64>, mesh: Arc<BoundaryMesh>, grid: TimeGrid, tol: f64 },
}

impl TimeDomainRun {
    /// Runs the time-domain simulation of `config` on its full horizon.
    pub fn simulate(config: &ProbeConfig) -> Result<Self, IndicatorError> {
        config.validate()?;
        let (t_end, n_steps) = match config.path {
            PathSpec::TimeDomain { t_end, n_steps } => (t_end, n_steps),
            PathSpec::Elliptic => return Err(IndicatorError::Solver(SolverError::Setting("time-domain path required".into()))),
        };
        let tg = TimeGrid::new(t_end, n_steps)?;
        match config.mode {
            SolverMode::Radial { n_cells } => {
                let setup = RadialSetup::new(&config.body, &config.inclusion, &config.shell, n_cells)?;
                Ok(TimeDomainRun::Radial { series: setup.time_domain(tg)?, area: setup.boundary_area(), n_cells })
            }
            SolverMode::Grid { n, config: cfg } => {
                let grid = Grid::for_body(&config.body, n)?;
                let mesh = grid_mesh(&config.body, &grid)?;
                let medium = MediumField::from_inclusion(&grid, &config.inclusion);
                grid_time_run(config, &grid, mesh, &medium, tg, &cfg)
            }
        }
    }

    pub fn time_grid(&self) -> TimeGrid {
        match self {
            TimeDomainRun::Radial { series, .. } => series.grid,
            TimeDomainRun::Grid { grid, .. } => *grid,
        }
    }

    /// Indicator series using the record up to step `steps` (horizon `steps dt`).
    pub fn series(&self, taus: &[f64], steps: usize) -> Result<IndicatorSeries, IndicatorError> {
        check_taus(taus)?;
        let mut out = IndicatorSeries::default();
        for (&tau, p) in taus.iter().zip(self.points(taus, steps)) {
            match p {
                Ok((value, floor)) => {
                    out.records.push(IndicatorRecord { tau, s: tau.sqrt(), value, floor, path: PathKind::TimeDomain })
                }
                Err(e) => out.failures.push((tau, e.to_string())),
            }
        }
        Ok(out)
    }

    fn points(&self, taus: &[f64], steps: usize) -> Vec<PointResult> {
        let full = self.time_grid();
        let steps = steps.clamp(2, full.n_steps);
        let tg = if steps == full.n_steps {
            full
        } else {
            TimeGrid { t_end: full.dt() * steps as f64, n_steps: steps }
        };
        let rows = tg.n_nodes();
        match self {
            TimeDomainRun::Radial { series, area, n_cells } => taus
                .iter()
                .map(|&tau| {
                    let lf = laplace_rows(&series.flux[..rows], 1, &tg, tau)[0];
                    let le = laplace_rows(&series.perturbation_trace[..rows], 1, &tg, tau)[0];
                    let value = -area * le * lf;
                    let floor = FLOOR_FACTOR * DIRECT_SOLVE_REL * (*n_cells as f64).sqrt() * value.abs();
                    Ok((value, floor))
                })
                .collect(),
            TimeDomainRun::Grid { flux_values, perturbation, mesh, tol, .. } => {
                let n = mesh.len();
                taus.par_iter()
                    .map(|&tau| {
                        let lf = laplace_rows(&flux_values[..rows * n], n, &tg, tau);
                        let le = laplace_rows(&perturbation[..rows * n], n, &tg, tau);
                        let gap: Vec<f64> = le.iter().map(|e| -e).collect();
                        let value = gap_indicator(&gap, &lf, mesh);
                        let scale: f64 =
                            mesh.nodes.iter().zip(&le).zip(&lf).map(|((nd, e), f)| (nd.weight * e * f).abs()).sum();
                        Ok((value, FLOOR_FACTOR * tol * scale))
                    })
                    .collect()
            }
        }
    }
}

/// Parameter `(1 - e^{-tau dt}) / dt` at which an implicit-Euler record,
/// Laplace transformed with step `dt`, solves the elliptic problem.
pub fn implicit_euler_tau(tau: f64, dt: f64) -> f64 {
    -(-tau * dt).exp_m1() / dt
}

/// `max |I|` of the inclusion-free twin over `taus`.
pub fn calibrate_floor(config: &ProbeConfig, taus: &[f64]) -> Result<f64, IndicatorError> {
    let twin = tau_sweep(&config.empty_twin(), taus)?;
    Ok(twin.records.iter().map(|r| r.value.abs()).fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// fitting

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpClass {
    /// `I < 0` throughout: conductivity lowered in the inclusion.
    Negative,
    /// `I > 0` throughout: conductivity raised.
    Positive,
    Indeterminate,
}

impl fmt::Display for JumpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JumpClass::Negative => "A.I",
            JumpClass::Positive => "A.II",
            JumpClass::Indeterminate => "indeterminate",
        })
    }
}

/// Sign shared by every record (zero counts as no sign).
pub fn classify_jump(records: &[IndicatorRecord]) -> JumpClass {
    if records.is_empty() {
        return JumpClass::Indeterminate;
    }
    if records.iter().all(|r| r.value < 0.0) {
        JumpClass::Negative
    } else if records.iter().all(|r| r.value > 0.0) {
        JumpClass::Positive
    } else {
        JumpClass::Indeterminate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitModel {
    /// `log|I| = c + beta s`.
    #[default]
    Affine,
    /// `log|I| = c + beta s - alpha log s`.
    Prefactor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowChoice {
    /// Upper half of the usable points; among that window and the two
    /// obtained by sliding it down one or two points, the smallest residual wins.
    Auto,
    Explicit { s_min: f64, s_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub model: FitModel,
    pub window: WindowChoice,
    /// Extra absolute floor, combined with the per-record floors.
    pub noise_floor: f64,
    pub min_points: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { model: FitModel::Affine, window: WindowChoice::Auto, noise_floor: 0.0, min_points: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusEstimate {
    /// Fitted `d log|I| / d s`.
    pub slope: f64,
    pub r_d_hat: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// RMS residual of the fit.
    pub residual: f64,
    pub class: JumpClass,
    pub model: FitModel,
    /// `alpha` of the prefactor model.
    pub prefactor_exponent: Option<f64>,
    pub n_points: usize,
}

impl RadiusEstimate {
    /// Key-value summary block.
    pub fn write_summary<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "slope = {:.16e}", self.slope)?;
        writeln!(w, "r_d_hat = {:.16e}", self.r_d_hat)?;
        writeln!(w, "window = [{:.16e}, {:.16e}]", self.s_min, self.s_max)?;
        writeln!(w, "residual = {:.16e}", self.residual)?;
        writeln!(w, "class = {}", self.class)?;
        writeln!(w, "points = {}", self.n_points)?;
        match self.prefactor_exponent {
            Some(a) => writeln!(w, "model = prefactor\nprefactor_exponent = {a:.16e}"),
            None => writeln!(w, "model = affine"),
        }
    }
}

/// Least squares fit: returns the coefficients and the RMS residual.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let k = columns.len();
    let n = y.len();
    // normal equations on centred/scaled columns would be nicer; k <= 3 here
    // so a Householder QR on the n x k matrix is plenty.
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    let mut b = y.to_vec();
    for j in 0..k {
        let norm = (j..n).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|i| a[i][j]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in j..k {
            let d: f64 = (j..n).map(|i| v[i - j] * a[i][col]).sum::<f64>() * 2.0 / vnorm2;
            for i in j..n {
                a[i][col] -= d * v[i - j];
            }
        }
        let d: f64 = (j..n).map(|i| v[i - j] * b[i]).sum::<f64>() * 2.0 / vnorm2;
        for i in j..n {
            b[i] -= d * v[i - j];
        }
    }
    let mut x = vec![0.0; k];
    for j in (0..k).rev() {
        let s: f64 = (j + 1..k).map(|c| a[j][c] * x[c]).sum();
        x[j] = (b[j] - s) / a[j][j];
    }
    let rss: f64 = (0..n)
        .map(|i| {
            let pred: f64 = columns.iter().zip(&x).map(|(c, xi)| c[i] * xi).sum();
            (y[i] - pred).powi(2)
        })
        .sum();
    (x, (rss / n as f64).sqrt())
}

fn fit_window(records: &[IndicatorRecord], model: FitModel) -> (f64, Option<f64>, f64) {
    let s: Vec<f64> = records.iter().map(|r| r.s).collect();
    let y: Vec<f64> = records.iter().map(|r| r.value.abs().ln()).collect();
    let ones = vec![1.0; s.len()];
    match model {
        FitModel::Affine => {
            let (c, res) = least_squares(&[ones, s], &y);
            (c[1], None, res)
        }
        FitModel::Prefactor => {
            let logs: Vec<f64> = s.iter().map(|v| -v.ln()).collect();
            let (c, res) = least_squares(&[ones, s, logs], &y);
            (c[1], Some(c[2]), res)
        }
    }
}

/// Fits the exponential rate of `|I|` in `s = sqrt(tau)` and reports
/// `R1 + slope / 2`.
pub fn extract_radius(series: &IndicatorSeries, r1: f64, opts: &FitOptions) -> Result<RadiusEstimate, IndicatorError> {
    let usable: Vec<IndicatorRecord> = series
        .records
        .iter()
        .filter(|r| r.value != 0.0 && r.value.is_finite() && r.value.abs() > r.floor.max(opts.noise_floor))
        .copied()
        .collect();
    if usable.is_empty() {
        return Err(IndicatorError::NoiseFloor);
    }
    let needed = opts.min_points.max(match opts.model {
        FitModel::Affine => 2,
        FitModel::Prefactor => 3,
    });
    let candidates: Vec<&[IndicatorRecord]> = match opts.window {
        WindowChoice::Explicit { s_min, s_max } => {
            let lo = usable.iter().position(|r| r.s >= s_min).unwrap_or(usable.len());
            let hi = usable.iter().rposition(|r| r.s <= s_max).map_or(lo, |i| i + 1);
            vec![&usable[lo..hi.max(lo)]]
        }
        WindowChoice::Auto => {
            let n = usable.len();
            let m = needed.max(n.div_ceil(2));
            if n < m {
                vec![&usable[..]]
            } else {
                (0..=2usize).filter(|&shift| shift + m <= n).map(|shift| &usable[n - m - shift..n - shift]).collect()
            }
        }
    };
    let mut best: Option<RadiusEstimate> = None;
    for w in candidates {
        if w.len() < needed {
            continue;
        }
        let (slope, alpha, residual) = fit_window(w, opts.model);
        let est = RadiusEstimate {
            slope,
            r_d_hat: r1 + 0.5 * slope,
            s_min: w[0].s,
            s_max: w[w.len() - 1].s,
            residual,
            class: classify_jump(w),
            model: opts.model,
            prefactor_exponent: alpha,
            n_points: w.len(),
        };
        if best.is_none_or(|b| residual < b.residual) {
            best = Some(est);
        }
    }
    best.ok_or(IndicatorError::TooFewPoints { needed, got: usable.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowClass {
    /// `e^{sT} |I|` decays: `T` below twice the gap `R1 - R_D`.
    Decays,
    Grows,
}

impl fmt::Display for WindowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowClass::Decays => "decays",
            WindowClass::Grows => "grows",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowTest {
    pub class: WindowClass,
    /// Fitted `d/ds [s T + log|I|]`.
    pub rate: f64,
    pub sign: JumpClass,
}

/// Sign of the fitted rate of `s T + log|I(s)|` over all usable records.
/// With [`FitModel::Prefactor`] a `-alpha log s` term absorbs algebraic
/// factors and the rate is the asymptotic one.
pub fn time_window_test(series: &IndicatorSeries, t_end: f64, model: FitModel) -> Result<WindowTest, IndicatorError> {
    let usable: Vec<IndicatorRecord> =
        series.records.iter().filter(|r| r.value != 0.0 && r.value.abs() > r.floor).copied().collect();
    let needed = match model {
        FitModel::Affine => 3,
        FitModel::Prefactor => 4,
    };
    if usable.len() < needed {
        return Err(IndicatorError::TooFewPoints { needed, got: usable.len() });
    }
    let s: Vec<f64> = usable.iter().map(|r| r.s).collect();
    let y: Vec<f64> = usable.iter().map(|r| r.s * t_end + r.value.abs().ln()).collect();
    let mut cols = vec![vec![1.0; s.len()], s.clone()];
    if model == FitModel::Prefactor {
        cols.push(s.iter().map(|v| -v.ln()).collect());
    }
    let (c, _) = least_squares(&cols, &y);
    Ok(WindowTest {
        class: if c[1] < 0.0 { WindowClass::Decays } else { WindowClass::Grows },
        rate: c[1],
        sign: classify_jump(&usable),
    })
}
