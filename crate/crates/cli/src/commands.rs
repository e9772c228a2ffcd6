//! Pipeline stages behind each subcommand, and the artifact manifest.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use enclab_core::geometry::{boundary_mesh, BoundaryMesh};
use enclab_core::heatsolver::{
    grid_mesh, reference_field, solve_heat_twin, solve_helmholtz_perturbation, Grid, MediumField, RadialSetup,
    SolverError,
};
use enclab_core::indicator::{
    default_taus, extract_radius, log_spaced_taus, tau_sweep, IndicatorError, IndicatorSeries, PathSpec, ProbeConfig,
    RadiusEstimate, SolverMode,
};
use enclab_core::potentials::{SpectralParam, W00};
use enclab_core::shellflux::{flux_on_boundary, FluxError, TimeGrid};
use enclab_core::thermo::{lens_sweep, rate_check, rate_check_taus, ShellElasticSource, ThermoError, TouchingBallGeom};
use enclab_core::BodySpec;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{render_config, RunConfig, TauGrid};
use crate::oracles;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Oracles,
    Flux,
    Forward,
    Indicator,
    Extract,
    Thermo,
    All,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Oracles => "oracles",
            Command::Flux => "flux",
            Command::Forward => "forward",
            Command::Indicator => "indicator",
            Command::Extract => "extract",
            Command::Thermo => "thermo",
            Command::All => "all",
        })
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0} oracle suite(s) failed")]
    Oracles(usize),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error("{0}")]
    Setup(String),
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    /// Process exit status: 4 when the indicator sank below its floor,
    /// 3 for every other stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Indicator(IndicatorError::NoiseFloor) => 4,
            _ => 3,
        }
    }
}

/// Files written so far, with their SHA-256 digests.
#[derive(Debug, Default)]
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    /// Writes `name` through `fill`, then records its digest.
    pub fn write(&mut self, name: &str, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let io_err = |source| RunError::Io { path: path.clone(), source };
        let mut buf = Vec::new();
        fill(&mut buf).map_err(io_err)?;
        let mut f = BufWriter::new(fs::File::create(&path).map_err(io_err)?);
        f.write_all(&buf).and_then(|_| f.flush()).map_err(io_err)?;
        let digest = hex::encode(Sha256::digest(&buf));
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), digest));
        Ok(())
    }

    pub fn files(&self) -> &[(String, String)] {
        &self.files
    }

    /// `manifest.txt`: completion status plus one `sha256  name` line per file.
    pub fn write_manifest(&self, command: Command, failure: Option<&str>) -> Result<(), RunError> {
        let path = self.dir.join("manifest.txt");
        let mut text = format!("command = {command}\n");
        match failure {
            None => text.push_str("status = complete\n"),
            Some(stage) => text.push_str(&format!("status = partial\nfailed_stage = {stage}\n")),
        }
        let mut files = self.files.clone();
        files.sort();
        for (name, digest) in files {
            text.push_str(&format!("{digest}  {name}\n"));
        }
        fs::write(&path, text).map_err(|source| RunError::Io { path, source })
    }
}

pub fn resolve_taus(cfg: &RunConfig) -> Result<Vec<f64>, RunError> {
    Ok(match cfg.taus {
        TauGrid::Default { count } => default_taus(&cfg.probe, count)?,
        TauGrid::Range { min, max, count } => log_spaced_taus(min.sqrt(), max.sqrt(), count),
    })
}

fn stage_oracles(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let reports = oracles::run_all(cfg.seed, cfg.oracle_cases);
    art.write("oracles.txt", |w| oracles::write_report(&reports, w))?;
    match reports.iter().filter(|r| !r.passed()).count() {
        0 => Ok(()),
        n => Err(RunError::Oracles(n)),
    }
}

fn probe_mesh(cfg: &RunConfig) -> Result<Arc<BoundaryMesh>, RunError> {
    let probe = &cfg.probe;
    match probe.mode {
        SolverMode::Grid { n, .. } => Ok(grid_mesh(&probe.body, &Grid::for_body(&probe.body, n)?)?),
        SolverMode::Radial { .. } => Ok(Arc::new(
            boundary_mesh(&probe.body, cfg.mesh_resolution).map_err(|e| RunError::Setup(e.to_string()))?,
        )),
    }
}

fn stage_flux(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let tg = TimeGrid::new(cfg.t_end, cfg.steps)?;
    let flux = flux_on_boundary(&cfg.probe.body, probe_mesh(cfg)?, tg, &cfg.probe.shell)?;
    art.write("flux.csv", |w| flux.write_csv(w))
}

fn stage_forward(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let probe = &cfg.probe;
    match (probe.mode, probe.path) {
        (SolverMode::Radial { n_cells }, PathSpec::Elliptic) => {
            let setup = RadialSetup::new(&probe.body, &probe.inclusion, &probe.shell, n_cells)?;
            let rows = resolve_taus(cfg)?
                .iter()
                .map(|&tau| setup.elliptic_perturbation(tau))
                .collect::<Result<Vec<_>, _>>()?;
            let radius = body_radius(&probe.body);
            art.write("forward.csv", |w| {
                writeln!(w, "tau,r,w0,w")?;
                for e in &rows {
                    writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", e.tau, radius, e.w0_boundary, e.w0_boundary + e.eps_boundary)?;
                }
                Ok(())
            })
        }
        (SolverMode::Radial { n_cells }, PathSpec::TimeDomain { t_end, n_steps }) => {
            let setup = RadialSetup::new(&probe.body, &probe.inclusion, &probe.shell, n_cells)?;
            let ts = setup.time_domain(TimeGrid::new(t_end, n_steps)?)?;
            art.write("forward.csv", |w| {
                writeln!(w, "t,flux,reference,perturbation,temperature")?;
                for k in 0..ts.grid.n_nodes() {
                    let (u, e) = (ts.reference_trace[k], ts.perturbation_trace[k]);
                    writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", ts.grid.node(k), ts.flux[k], u, e, u + e)?;
                }
                Ok(())
            })
        }
        (SolverMode::Grid { n, config }, PathSpec::Elliptic) => {
            let grid = Grid::for_body(&probe.body, n)?;
            let mesh = grid_mesh(&probe.body, &grid)?;
            let medium = MediumField::from_inclusion(&grid, &probe.inclusion);
            let mut rows = Vec::new();
            for tau in resolve_taus(cfg)? {
                let sp = SpectralParam::from_tau(tau).map_err(|e| RunError::Setup(e.to_string()))?;
                let r = reference_field(&grid, &mesh, &W00::new(probe.shell, sp))?;
                let pert = solve_helmholtz_perturbation(&grid, &medium, tau, &mesh, &r.cells, &config)?;
                rows.push((tau, r.trace, pert.trace));
            }
            art.write("forward.csv", |w| {
                writeln!(w, "tau,node_id,x,y,z,w0,w")?;
                for (tau, w0, eps) in &rows {
                    for (i, nd) in mesh.nodes.iter().enumerate() {
                        let p = nd.position;
                        writeln!(
                            w,
                            "{:.16e},{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                            tau, p.x, p.y, p.z, w0[i], w0[i] + eps[i]
                        )?;
                    }
                }
                Ok(())
            })
        }
        (SolverMode::Grid { n, config }, PathSpec::TimeDomain { t_end, n_steps }) => {
            let grid = Grid::for_body(&probe.body, n)?;
            let mesh = grid_mesh(&probe.body, &grid)?;
            let medium = MediumField::from_inclusion(&grid, &probe.inclusion);
            let flux = flux_on_boundary(&probe.body, mesh, TimeGrid::new(t_end, n_steps)?, &probe.shell)?;
            let twin = solve_heat_twin(&grid, &medium, &flux, &config)?;
            art.write("forward.csv", |w| twin.total().write_csv(w))
        }
    }
}

fn body_radius(body: &BodySpec) -> f64 {
    match body {
        BodySpec::Ball(b) => b.radius,
        BodySpec::Box(_) => f64::NAN,
    }
}

fn stage_indicator(cfg: &RunConfig, art: &mut Artifacts) -> Result<IndicatorSeries, RunError> {
    let series = tau_sweep(&cfg.probe, &resolve_taus(cfg)?)?;
    art.write("indicator.csv", |w| series.write_csv(w))?;
    if !series.failures.is_empty() {
        art.write("indicator_failures.txt", |w| {
            for (tau, e) in &series.failures {
                writeln!(w, "{tau:.16e}: {e}")?;
            }
            Ok(())
        })?;
    }
    Ok(series)
}

fn stage_extract(cfg: &RunConfig, art: &mut Artifacts, series: &IndicatorSeries) -> Result<RadiusEstimate, RunError> {
    let est = extract_radius(series, cfg.probe.shell.r1, &cfg.fit)?;
    art.write("summary.txt", |w| est.write_summary(w))?;
    Ok(est)
}

fn stage_thermo(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let probe: &ProbeConfig = &cfg.probe;
    let ball = probe
        .inclusion
        .balls
        .first()
        .ok_or_else(|| RunError::Setup("the thermoelastic checks need a ball inclusion".into()))?;
    let geom = TouchingBallGeom::for_ball(probe.shell.p, ball)?;
    let t = &cfg.thermo;
    let src = ShellElasticSource::new(probe.shell, geom.b)?;
    let taus = rate_check_taus(&t.params, probe.shell.r1, geom.r_d, t.scaled_min, t.scaled_max, t.count);
    let rc = rate_check(&t.params, &src, &geom, &taus)?;
    let lens_taus = enclab_core::thermo::linspace(t.lens_min / geom.r_d, t.lens_max / geom.r_d, t.count);
    let lens = lens_sweep(&geom, &lens_taus)?;
    art.write("thermo_lens.csv", |w| lens.write_csv(w))?;
    art.write("thermo_rate.csv", |w| rc.write_csv(w))?;
    art.write("thermo_summary.txt", |w| {
        rc.write_summary(&mut *w, &t.windows)?;
        writeln!(w, "contact_radius = {:.17e}", geom.r_d)?;
        writeln!(w, "lens_exponent_perp = {:.17e}", lens.perp.rate)?;
        writeln!(w, "lens_exponent_parallel = {:.17e}", lens.parallel.rate)?;
        writeln!(w, "lens_alpha_perp = {:.17e}", lens.perp.alpha)?;
        writeln!(w, "lens_alpha_parallel = {:.17e}", lens.parallel.alpha)
    })
}

/// What a finished command leaves for the caller to print.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub summary: Option<String>,
    pub files: Vec<(String, String)>,
}

/// Runs `command`, writing artifacts and a manifest under `cfg.out_dir`.
/// The manifest marks the run partial when a stage fails.
pub fn run_command(command: Command, cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let mut art = Artifacts::new(&cfg.out_dir)?;
    art.write("effective_config.txt", |w| w.write_all(render_config(cfg).as_bytes()))?;
    let mut stage = "setup";
    let result = run_stages(command, cfg, &mut art, &mut stage);
    art.write_manifest(command, result.as_ref().err().map(|_| stage))?;
    result.map(|summary| RunOutcome { summary, files: art.files().to_vec() })
}

fn run_stages(
    command: Command,
    cfg: &RunConfig,
    art: &mut Artifacts,
    stage: &mut &'static str,
) -> Result<Option<String>, RunError> {
    let summary = |est: &RadiusEstimate| {
        let mut buf = Vec::new();
        est.write_summary(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii summary")
    };
    match command {
        Command::Oracles => {
            *stage = "oracles";
            stage_oracles(cfg, art)?;
        }
        Command::Flux => {
            *stage = "flux";
            stage_flux(cfg, art)?;
        }
        Command::Forward => {
            *stage = "forward";
            stage_forward(cfg, art)?;
        }
        Command::Indicator => {
            *stage = "indicator";
            stage_indicator(cfg, art)?;
        }
        Command::Extract => {
            *stage = "indicator";
            let series = stage_indicator(cfg, art)?;
            *stage = "extract";
            return Ok(Some(summary(&stage_extract(cfg, art, &series)?)));
        }
        Command::Thermo => {
            *stage = "thermo";
            stage_thermo(cfg, art)?;
        }
        Command::All => {
            *stage = "oracles";
            stage_oracles(cfg, art)?;
            *stage = "flux";
            stage_flux(cfg, art)?;
            *stage = "forward";
            stage_forward(cfg, art)?;
            *stage = "indicator";
            let series = stage_indicator(cfg, art)?;
            if !cfg.probe.inclusion.is_empty() {
                *stage = "thermo";
                stage_thermo(cfg, art)?;
            }
            *stage = "extract";
            return Ok(Some(summary(&stage_extract(cfg, art, &series)?)));
        }
    }
    Ok(None)
}
