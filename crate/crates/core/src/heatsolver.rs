//! Finite-volume forward solvers: implicit-Euler heat stepping and the
//! modified-Helmholtz (Laplace-domain) problem on box grids, plus a
//! tridiagonal solver for configurations that are radial about the probe.
//!
//! Reduction order: every inner product is formed from partial sums over
//! fixed chunks of `REDUCTION_CHUNK` cells, added left to right. Results do
//! not depend on the number of worker threads.

use std::io::{self, Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    tangential_axes, AxisBox, BallShape, BodySpec, BoundaryMesh, GeometryError, InclusionSpec, MeshLayout, Point,
    ShellSource,
};
use crate::potentials::{PotentialError, SpectralParam, W00};
use crate::shellflux::{shell_heat_value, BoundarySeries, FluxError, FluxRecord, SeriesKind, TimeGrid};

pub const REDUCTION_CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("linear solver did not converge: {iterations} iterations, relative residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("grid needs at least 8 cells per axis, got {0:?}")]
    GridSize([usize; 3]),
    #[error("3D solves need a box body; ball bodies run in radial mode")]
    UnsupportedBody,
    #[error("boundary mesh does not match the grid faces")]
    MeshMismatch,
    #[error("configuration is not radial about the probe point: {0}")]
    NotConcentric(&'static str),
    #[error("invalid solver setting: {0}")]
    Setting(String),
    #[error("field length {got} does not match {expected} cells")]
    FieldLength { got: usize, expected: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Uniform cell-centred grid over an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub bounds: AxisBox,
    pub n: [usize; 3],
    pub h: [f64; 3],
}

impl Grid {
    pub fn new(bounds: AxisBox, n: [usize; 3]) -> Result<Self, SolverError> {
        if n.iter().any(|&c| c < 8) {
            return Err(SolverError::GridSize(n));
        }
        let e = bounds.extent();
        let h = [e.x / n[0] as f64, e.y / n[1] as f64, e.z / n[2] as f64];
        Ok(Self { bounds, n, h })
    }

    /// Grid with `n` cells per axis covering a box body.
    pub fn for_body(body: &BodySpec, n: usize) -> Result<Self, SolverError> {
        match body {
            BodySpec::Box(b) => Self::new(*b, [n; 3]),
            BodySpec::Ball(_) => Err(SolverError::UnsupportedBody),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Linear index, `x` fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n[1] + j) * self.n[0] + i
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Point {
        let m = self.bounds.min;
        Point::new(
            m.x + (i as f64 + 0.5) * self.h[0],
            m.y + (j as f64 + 0.5) * self.h[1],
            m.z + (k as f64 + 0.5) * self.h[2],
        )
    }

    pub fn centers(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.n_cells());
        for k in 0..self.n[2] {
            for j in 0..self.n[1] {
                for i in 0..self.n[0] {
                    out.push(self.center(i, j, k));
                }
            }
        }
        out
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[0] * self.h[1] * self.h[2]
    }

    fn face_area(&self, axis: usize) -> f64 {
        let (a, b) = tangential_axes(axis);
        self.h[a] * self.h[b]
    }

    /// Cell under each node of a box boundary mesh, plus the normal axis.
    pub fn boundary_cells(&self, mesh: &BoundaryMesh) -> Result<Vec<(usize, usize)>, SolverError> {
        let n = match mesh.layout {
            MeshLayout::Box { n } => n,
            MeshLayout::Sphere { .. } => return Err(SolverError::MeshMismatch),
        };
        if self.n != [n; 3] || mesh.len() != 6 * n * n {
            return Err(SolverError::MeshMismatch);
        }
        let mut out = Vec::with_capacity(mesh.len());
        for axis in 0..3 {
            let (a1, a2) = tangential_axes(axis);
            for side in 0..2 {
                for i in 0..n {
                    for j in 0..n {
                        let mut idx = [0usize; 3];
                        idx[axis] = if side == 0 { 0 } else { n - 1 };
                        idx[a1] = i;
                        idx[a2] = j;
                        out.push((self.index(idx[0], idx[1], idx[2]), axis));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Structured dump: `u64` nx, ny, nz, six `f64` bounds (min then max),
    /// then the cell values with `x` fastest. Little-endian.
    pub fn write_field<W: Write>(&self, field: &[f64], mut w: W) -> Result<(), SolverError> {
        self.check_len(field)?;
        for c in self.n {
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        for v in self.bounds.min.to_array().iter().chain(self.bounds.max.to_array().iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in field {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_field<R: Read>(mut r: R) -> Result<(Grid, Vec<f64>), SolverError> {
        let mut buf = [0u8; 8];
        let mut n = [0usize; 3];
        for c in n.iter_mut() {
            r.read_exact(&mut buf)?;
            *c = u64::from_le_bytes(buf) as usize;
        }
        let mut b = [0.0; 6];
        for v in b.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        let bounds = AxisBox::new(Point::new(b[0], b[1], b[2]), Point::new(b[3], b[4], b[5]))?;
        let grid = Grid::new(bounds, n)?;
        let mut field = Vec::with_capacity(grid.n_cells());
        for _ in 0..grid.n_cells() {
            r.read_exact(&mut buf)?;
            field.push(f64::from_le_bytes(buf));
        }
        Ok((grid, field))
    }

    fn check_len(&self, field: &[f64]) -> Result<(), SolverError> {
        if field.len() != self.n_cells() {
            return Err(SolverError::FieldLength { got: field.len(), expected: self.n_cells() });
        }
        Ok(())
    }
}

/// Per-cell conductivity `gamma = 1 + h chi_D`.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumField {
    /// Cell conductivity. Cells cut by the inclusion boundary carry the
    /// volume-fraction average of the two values.
    pub gamma: Vec<f64>,
    pub h: f64,
    /// Cell centre inside the inclusion.
    pub mask: Vec<bool>,
}

/// Sub-samples per axis used to estimate cut-cell volume fractions.
pub const MEDIUM_SUBSAMPLES: usize = 4;

impl MediumField {
    pub fn uniform(grid: &Grid) -> Self {
        Self { gamma: vec![1.0; grid.n_cells()], h: 0.0, mask: vec![false; grid.n_cells()] }
    }

    pub fn from_inclusion(grid: &Grid, inclusion: &InclusionSpec) -> Self {
        if inclusion.is_empty() {
            return Self::uniform(grid);
        }
        let m = MEDIUM_SUBSAMPLES;
        let centers = grid.centers();
        let half_diag = 0.5 * (grid.h[0].powi(2) + grid.h[1].powi(2) + grid.h[2].powi(2)).sqrt();
        let (gamma, mask): (Vec<f64>, Vec<bool>) = centers
            .par_iter()
            .map(|&c| {
                let inside = inclusion.contains(c);
                let cut = inclusion
                    .balls
                    .iter()
                    .any(|b| (c.dist(b.center) - b.radius).abs() <= half_diag);
                let frac = if !cut {
                    if inside { 1.0 } else { 0.0 }
                } else {
                    let mut hits = 0usize;
                    for a in 0..m {
                        for b in 0..m {
                            for d in 0..m {
                                let off = |q: usize, ax: usize| ((q as f64 + 0.5) / m as f64 - 0.5) * grid.h[ax];
                                let x = c + Point::new(off(a, 0), off(b, 1), off(d, 2));
                                if inclusion.contains(x) {
                                    hits += 1;
                                }
                            }
                        }
                    }
                    hits as f64 / (m * m * m) as f64
                };
                (1.0 + inclusion.h * frac, inside)
            })
            .unzip();
        Self { gamma, h: inclusion.h, mask }
    }

    pub fn is_uniform(&self) -> bool {
        self.gamma.iter().all(|&g| g == 1.0)
    }
}

/// Conjugate-gradient settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative residual target `||b - A x|| <= tol ||b||`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20_000 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            return Err(SolverError::Setting(format!("tolerance {} outside (0, 1e-4]", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SolverError::Setting("max_iter must be positive".into()));
        }
        Ok(())
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// `shift * V u + K u`, where `K` is the conductance Laplacian.
#[derive(Debug, Clone)]
struct Stencil {
    n: [usize; 3],
    /// Face conductances per axis, indexed by the lower cell.
    g: [Vec<f64>; 3],
    vol: f64,
}

impl Stencil {
    fn new(grid: &Grid, gamma: &[f64]) -> Self {
        let n = grid.n;
        let stride = [1, n[0], n[0] * n[1]];
        let g = std::array::from_fn(|axis| {
            let scale = grid.face_area(axis) / grid.h[axis];
            let mut out = vec![0.0; grid.n_cells()];
            for k in 0..n[2] {
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        let idx = [i, j, k];
                        if idx[axis] + 1 < n[axis] {
                            let c = grid.index(i, j, k);
                            out[c] = scale * harmonic(gamma[c], gamma[c + stride[axis]]);
                        }
                    }
                }
            }
            out
        });
        Self { n, g, vol: grid.cell_volume() }
    }

    fn apply(&self, shift: f64, u: &[f64], out: &mut [f64]) {
        let [nx, ny, nz] = self.n;
        let plane = nx * ny;
        let sv = shift * self.vol;
        out.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
            for j in 0..ny {
                for i in 0..nx {
                    let c = (k * ny + j) * nx + i;
                    let uc = u[c];
                    let mut acc = sv * uc;
                    if i + 1 < nx {
                        acc += self.g[0][c] * (uc - u[c + 1]);
                    }
                    if i > 0 {
                        acc += self.g[0][c - 1] * (uc - u[c - 1]);
                    }
                    if j + 1 < ny {
                        acc += self.g[1][c] * (uc - u[c + nx]);
                    }
                    if j > 0 {
                        acc += self.g[1][c - nx] * (uc - u[c - nx]);
                    }
                    if k + 1 < nz {
                        acc += self.g[2][c] * (uc - u[c + plane]);
                    }
                    if k > 0 {
                        acc += self.g[2][c - plane] * (uc - u[c - plane]);
                    }
                    slab[j * nx + i] = acc;
                }
            }
        });
    }

    fn diagonal(&self, shift: f64) -> Vec<f64> {
        let [nx, ny, nz] = self.n;
        let plane = nx * ny;
        let mut d = vec![shift * self.vol; nx * ny * nz];
        for (axis, stride) in [1, nx, plane].into_iter().enumerate() {
            for (c, &g) in self.g[axis].iter().enumerate() {
                if g != 0.0 {
                    d[c] += g;
                    d[c + stride] += g;
                }
            }
        }
        d
    }

    fn strides(&self) -> [usize; 3] {
        [1, self.n[0], self.n[0] * self.n[1]]
    }
}

/// Faces whose conductance differs from the uniform background.
#[derive(Debug, Clone, Default)]
struct ContrastFaces {
    faces: Vec<(usize, usize, f64)>,
}

impl ContrastFaces {
    fn new(medium: &Stencil, background: &Stencil) -> Self {
        let strides = medium.strides();
        let mut faces = Vec::new();
        for axis in 0..3 {
            for (c, (&gm, &gb)) in medium.g[axis].iter().zip(&background.g[axis]).enumerate() {
                if gm != gb {
                    faces.push((c, c + strides[axis], gm - gb));
                }
            }
        }
        Self { faces }
    }

    /// `out -= (K_gamma - K_1) u`.
    fn subtract_apply(&self, u: &[f64], out: &mut [f64]) {
        for &(a, b, dg) in &self.faces {
            let f = dg * (u[a] - u[b]);
            out[a] -= f;
            out[b] += f;
        }
    }

    /// `u . (K_gamma - K_1) v`.
    fn form(&self, u: &[f64], v: &[f64]) -> f64 {
        self.faces.iter().map(|&(a, b, dg)| dg * (u[a] - u[b]) * (v[a] - v[b])).sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(REDUCTION_CHUNK)
        .zip(b.par_chunks(REDUCTION_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned CG for `(shift V + K) x = b`, starting from `x`.
fn cg(op: &Stencil, shift: f64, b: &[f64], x: &mut [f64], cfg: &SolverConfig) -> Result<SolveStats, SolverError> {
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = op.diagonal(shift).into_iter().map(|d| 1.0 / d).collect();
    let n = b.len();
    let mut r = vec![0.0; n];
    op.apply(shift, x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / bnorm;
    for it in 0..cfg.max_iter {
        if res <= cfg.tol {
            return Ok(SolveStats { iterations: it, residual: res });
        }
        op.apply(shift, &p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        z.par_iter_mut()
            .zip(&r)
            .zip(&inv_diag)
            .for_each(|((zi, ri), di)| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        res = dot(&r, &r).sqrt() / bnorm;
    }
    if res <= cfg.tol {
        return Ok(SolveStats { iterations: cfg.max_iter, residual: res });
    }
    Err(SolverError::NonConvergence { iterations: cfg.max_iter, residual: res })
}

/// Assembles `b_c = sum over boundary faces of g A` from per-node Neumann data.
fn neumann_rhs(grid: &Grid, cells: &[(usize, usize)], g: &[f64], scale: f64, out: &mut [f64]) {
    for (&(c, axis), gv) in cells.iter().zip(g) {
        out[c] += scale * gv * grid.face_area(axis);
    }
}

/// Boundary trace `u_c + (h/2) g / gamma` at each mesh node.
fn boundary_trace(grid: &Grid, cells: &[(usize, usize)], field: &[f64], g: &[f64], gamma: &[f64]) -> Vec<f64> {
    cells
        .iter()
        .zip(g)
        .map(|(&(c, axis), gv)| field[c] + 0.5 * grid.h[axis] * gv / gamma[c])
        .collect()
}

/// Interior field and boundary trace of an elliptic solve.
#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub field: Vec<f64>,
    pub trace: Vec<f64>,
    pub stats: SolveStats,
}

/// Solves `(div gamma grad - tau) w = -source` with `gamma grad w . nu = neumann`
/// at the mesh nodes. `source` holds cell-centre values.
pub fn solve_modified_helmholtz(
    grid: &Grid,
    medium: &MediumField,
    tau: f64,
    mesh: &BoundaryMesh,
    neumann: &[f64],
    source: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<EllipticSolution, SolverError> {
    cfg.validate()?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SolverError::Setting(format!("tau must be positive, got {tau}")));
    }
    grid.check_len(&medium.gamma)?;
    let cells = grid.boundary_cells(mesh)?;
    if neumann.len() != cells.len() {
        return Err(SolverError::MeshMismatch);
    }
    let op = Stencil::new(grid, &medium.gamma);
    let mut b = vec![0.0; grid.n_cells()];
    if let Some(src) = source {
        grid.check_len(src)?;
        let v = grid.cell_volume();
        b.iter_mut().zip(src).for_each(|(bi, s)| *bi = v * s);
    }
    neumann_rhs(grid, &cells, neumann, 1.0, &mut b);
    let mut field = vec![0.0; grid.n_cells()];
    let stats = cg(&op, tau, &b, &mut field, cfg)?;
    let trace = boundary_trace(grid, &cells, &field, neumann, &medium.gamma);
    Ok(EllipticSolution { field, trace, stats })
}

/// Inclusion response to a reference field known at the cell centres.
#[derive(Debug, Clone)]
pub struct PerturbationSolution {
    /// `eps = w - w_ref` at the cell centres.
    pub field: Vec<f64>,
    /// `eps` at the boundary nodes (its Neumann data vanish).
    pub trace: Vec<f64>,
    /// `sum over contrast faces of (G_gamma - G_1) dw_ref dw`, the discrete
    /// `int (gamma - 1) grad w_ref . grad w`.
    pub contrast_form: f64,
    pub stats: SolveStats,
}

/// Solves `(tau V + K_gamma) eps = -(K_gamma - K_1) w_ref`.
pub fn solve_helmholtz_perturbation(
    grid: &Grid,
    medium: &MediumField,
    tau: f64,
    mesh: &BoundaryMesh,
    reference: &[f64],
    cfg: &SolverConfig,
) -> Result<PerturbationSolution, SolverError> {
    cfg.validate()?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SolverError::Setting(format!("tau must be positive, got {tau}")));
    }
    grid.check_len(&medium.gamma)?;
    grid.check_len(reference)?;
    let cells = grid.boundary_cells(mesh)?;
    let op = Stencil::new(grid, &medium.gamma);
    let background = Stencil::new(grid, &vec![1.0; grid.n_cells()]);
    let contrast = ContrastFaces::new(&op, &background);
    let mut b = vec![0.0; grid.n_cells()];
    contrast.subtract_apply(reference, &mut b);
    let mut field = vec![0.0; grid.n_cells()];
    let stats = cg(&op, tau, &b, &mut field, cfg)?;
    let trace = cells.iter().map(|&(c, _)| field[c]).collect();
    let total: Vec<f64> = reference.iter().zip(&field).map(|(a, e)| a + e).collect();
    let contrast_form = contrast.form(reference, &total);
    Ok(PerturbationSolution { field, trace, contrast_form, stats })
}

/// `w00` and its normal derivative for a grid: cell values, boundary-node
/// values and `grad w00 . nu` at the boundary nodes.
#[derive(Debug, Clone)]
pub struct ReferenceField {
    pub cells: Vec<f64>,
    pub trace: Vec<f64>,
    pub normal_deriv: Vec<f64>,
}

pub fn reference_field(grid: &Grid, mesh: &BoundaryMesh, w00: &W00) -> Result<ReferenceField, SolverError> {
    let cells: Result<Vec<f64>, PotentialError> = grid.centers().par_iter().map(|&x| w00.value(x)).collect();
    let trace: Result<Vec<f64>, PotentialError> = mesh.nodes.iter().map(|n| w00.value(n.position)).collect();
    let normal_deriv: Result<Vec<f64>, PotentialError> =
        mesh.nodes.iter().map(|n| w00.gradient(n.position).map(|g| g.dot(n.normal))).collect();
    Ok(ReferenceField { cells: cells?, trace: trace?, normal_deriv: normal_deriv? })
}

/// Boundary temperatures of a time-domain solve and the final interior field.
#[derive(Debug, Clone)]
pub struct TimeDomainSolution {
    pub trace: BoundarySeries,
    pub final_field: Vec<f64>,
    /// Sum of CG iterations over all steps.
    pub iterations: usize,
}

/// Implicit Euler for `u_t = div gamma grad u` with `gamma grad u . nu = f`,
/// starting from `initial` (zero if absent). The trace at `t_0` is the
/// initial boundary-cell value.
pub fn solve_heat_timedomain(
    grid: &Grid,
    medium: &MediumField,
    flux: &FluxRecord,
    initial: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<TimeDomainSolution, SolverError> {
    cfg.validate()?;
    grid.check_len(&medium.gamma)?;
    let cells = grid.boundary_cells(&flux.mesh)?;
    let op = Stencil::new(grid, &medium.gamma);
    let tg = flux.grid;
    let dt = tg.dt();
    let shift = 1.0 / dt;
    let mut u = match initial {
        Some(u0) => {
            grid.check_len(u0)?;
            u0.to_vec()
        }
        None => vec![0.0; grid.n_cells()],
    };
    let n_nodes = cells.len();
    let mut values = Vec::with_capacity(n_nodes * tg.n_nodes());
    values.extend(boundary_trace(grid, &cells, &u, flux.time_slice(0), &medium.gamma));
    let mut b = vec![0.0; grid.n_cells()];
    let mut iterations = 0;
    let v_dt = grid.cell_volume() * shift;
    for k in 1..tg.n_nodes() {
        b.iter_mut().zip(&u).for_each(|(bi, ui)| *bi = v_dt * ui);
        neumann_rhs(grid, &cells, flux.time_slice(k), 1.0, &mut b);
        iterations += cg(&op, shift, &b, &mut u, cfg)?.iterations;
        values.extend(boundary_trace(grid, &cells, &u, flux.time_slice(k), &medium.gamma));
    }
    let trace = BoundarySeries { mesh: flux.mesh.clone(), grid: tg, kind: SeriesKind::Temperature, values };
    Ok(TimeDomainSolution { trace, final_field: u, iterations })
}

/// A time-domain solve split into the inclusion-free twin `u_1` and the
/// inclusion response `e = u - u_1`.
#[derive(Debug, Clone)]
pub struct TwinSolution {
    pub reference: BoundarySeries,
    pub perturbation: BoundarySeries,
    pub final_reference: Vec<f64>,
    pub final_perturbation: Vec<f64>,
    pub iterations: usize,
}

impl TwinSolution {
    /// Full boundary temperature `u_1 + e`.
    pub fn total(&self) -> BoundarySeries {
        let values = self.reference.values.iter().zip(&self.perturbation.values).map(|(a, b)| a + b).collect();
        BoundarySeries { values, ..self.reference.clone() }
    }
}

/// Steps `u_1` with uniform conductivity and
/// `(V/dt + K_gamma) e^{n+1} = V/dt e^n - (K_gamma - K_1) u_1^{n+1}`.
pub fn solve_heat_twin(
    grid: &Grid,
    medium: &MediumField,
    flux: &FluxRecord,
    cfg: &SolverConfig,
) -> Result<TwinSolution, SolverError> {
    cfg.validate()?;
    grid.check_len(&medium.gamma)?;
    let cells = grid.boundary_cells(&flux.mesh)?;
    let ones = vec![1.0; grid.n_cells()];
    let op1 = Stencil::new(grid, &ones);
    let opg = Stencil::new(grid, &medium.gamma);
    let contrast = ContrastFaces::new(&opg, &op1);
    let tg = flux.grid;
    let shift = 1.0 / tg.dt();
    let v_dt = grid.cell_volume() * shift;
    let nc = grid.n_cells();
    let (mut u1, mut e) = (vec![0.0; nc], vec![0.0; nc]);
    let mut b = vec![0.0; nc];
    let n_nodes = cells.len();
    let mut ref_vals = Vec::with_capacity(n_nodes * tg.n_nodes());
    let mut pert_vals = Vec::with_capacity(n_nodes * tg.n_nodes());
    ref_vals.extend(boundary_trace(grid, &cells, &u1, flux.time_slice(0), &ones));
    pert_vals.extend(cells.iter().map(|&(c, _)| e[c]));
    let mut iterations = 0;
    for k in 1..tg.n_nodes() {
        b.iter_mut().zip(&u1).for_each(|(bi, ui)| *bi = v_dt * ui);
        neumann_rhs(grid, &cells, flux.time_slice(k), 1.0, &mut b);
        iterations += cg(&op1, shift, &b, &mut u1, cfg)?.iterations;
        ref_vals.extend(boundary_trace(grid, &cells, &u1, flux.time_slice(k), &ones));

        b.iter_mut().zip(&e).for_each(|(bi, ei)| *bi = v_dt * ei);
        contrast.subtract_apply(&u1, &mut b);
        iterations += cg(&opg, shift, &b, &mut e, cfg)?.iterations;
        pert_vals.extend(cells.iter().map(|&(c, _)| e[c]));
    }
    let mesh = flux.mesh.clone();
    Ok(TwinSolution {
        reference: BoundarySeries { mesh: mesh.clone(), grid: tg, kind: SeriesKind::Temperature, values: ref_vals },
        perturbation: BoundarySeries { mesh, grid: tg, kind: SeriesKind::Temperature, values: pert_vals },
        final_reference: u1,
        final_perturbation: e,
        iterations,
    })
}

/// Total heat `sum V u`.
pub fn total_heat(grid: &Grid, field: &[f64]) -> f64 {
    grid.cell_volume() * dot(field, &vec![1.0; field.len()])
}

// ---------------------------------------------------------------------------
// radial mode

/// Tridiagonal system `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

/// Concentric ball body and inclusion discretized on spherical shells.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSetup {
    pub radius: f64,
    pub n_cells: usize,
    pub dr: f64,
    pub shell: ShellSource,
    /// Cell conductivity (volume-fraction average on the cut shell).
    pub gamma: Vec<f64>,
    pub h: f64,
}

impl RadialSetup {
    pub fn new(
        body: &BodySpec,
        inclusion: &InclusionSpec,
        shell: &ShellSource,
        n_cells: usize,
    ) -> Result<Self, SolverError> {
        const TOL: f64 = 1e-12;
        let ball: BallShape = match body {
            BodySpec::Ball(b) => *b,
            BodySpec::Box(_) => return Err(SolverError::NotConcentric("body must be a ball")),
        };
        if ball.center.dist(shell.p) > TOL * ball.radius {
            return Err(SolverError::NotConcentric("body center differs from the probe point"));
        }
        if inclusion.balls.len() > 1 {
            return Err(SolverError::NotConcentric("inclusion must be a single ball"));
        }
        if let Some(d) = inclusion.balls.first() {
            if d.center.dist(shell.p) > TOL * ball.radius {
                return Err(SolverError::NotConcentric("inclusion center differs from the probe point"));
            }
            if d.radius >= ball.radius {
                return Err(GeometryError::InclusionOutside { index: 0, margin: ball.radius - d.radius }.into());
            }
        }
        crate::geometry::validate_shell(body, shell)?;
        if n_cells < 8 {
            return Err(SolverError::GridSize([n_cells, 1, 1]));
        }
        let dr = ball.radius / n_cells as f64;
        let rd = inclusion.balls.first().map_or(0.0, |b| b.radius);
        let gamma = (0..n_cells)
            .map(|i| {
                let (a, b) = (i as f64 * dr, (i + 1) as f64 * dr);
                let frac = if rd >= b {
                    1.0
                } else if rd <= a {
                    0.0
                } else {
                    (rd.powi(3) - a.powi(3)) / (b.powi(3) - a.powi(3))
                };
                1.0 + inclusion.h * frac
            })
            .collect();
        Ok(Self { radius: ball.radius, n_cells, dr, shell: *shell, gamma, h: inclusion.h })
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr
    }

    fn volume(&self, i: usize) -> f64 {
        let (a, b) = (i as f64 * self.dr, (i + 1) as f64 * self.dr);
        4.0 / 3.0 * std::f64::consts::PI * (b.powi(3) - a.powi(3))
    }

    pub fn boundary_area(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.radius * self.radius
    }

    /// Conductance of the face between cells `i` and `i + 1`.
    fn conductances(&self, gamma: &[f64]) -> Vec<f64> {
        (0..self.n_cells - 1)
            .map(|i| {
                let r = (i + 1) as f64 * self.dr;
                4.0 * std::f64::consts::PI * r * r / self.dr * harmonic(gamma[i], gamma[i + 1])
            })
            .collect()
    }

    fn matrix(&self, shift: f64, g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n_cells;
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut diag: Vec<f64> = (0..n).map(|i| shift * self.volume(i)).collect();
        for (i, &gi) in g.iter().enumerate() {
            diag[i] += gi;
            diag[i + 1] += gi;
            upper[i] = -gi;
            lower[i + 1] = -gi;
        }
        (lower, diag, upper)
    }

    fn uniform(&self) -> Vec<f64> {
        vec![1.0; self.n_cells]
    }

    /// Direct solve of `(div gamma grad - tau) w = 0` with `gamma w_r = g` at
    /// the outer radius. Returns the cell field and the boundary value.
    pub fn elliptic_direct(&self, tau: f64, g: f64, uniform: bool) -> (Vec<f64>, f64) {
        let gamma = if uniform { self.uniform() } else { self.gamma.clone() };
        let (l, d, u) = self.matrix(tau, &self.conductances(&gamma));
        let mut rhs = vec![0.0; self.n_cells];
        rhs[self.n_cells - 1] = self.boundary_area() * g;
        let w = thomas(&l, &d, &u, &rhs);
        let last = self.n_cells - 1;
        let wb = w[last] + 0.5 * self.dr * g / gamma[last];
        (w, wb)
    }

    /// Inclusion response to `w00` at spectral parameter `tau`.
    pub fn elliptic_perturbation(&self, tau: f64) -> Result<RadialElliptic, SolverError> {
        let w00 = W00::new(self.shell, SpectralParam::from_tau(tau)?);
        let w0: Vec<f64> = (0..self.n_cells).map(|i| w00.radial_value(self.center(i))).collect::<Result<_, _>>()?;
        let gg = self.conductances(&self.gamma);
        let g1 = self.conductances(&self.uniform());
        let (l, d, u) = self.matrix(tau, &gg);
        let mut rhs = vec![0.0; self.n_cells];
        let mut contrast = Vec::new();
        for i in 0..self.n_cells - 1 {
            let dg = gg[i] - g1[i];
            if dg != 0.0 {
                let f = dg * (w0[i] - w0[i + 1]);
                rhs[i] -= f;
                rhs[i + 1] += f;
                contrast.push((i, dg));
            }
        }
        let eps = thomas(&l, &d, &u, &rhs);
        let contrast_form = contrast
            .iter()
            .map(|&(i, dg)| {
                let dw0 = w0[i] - w0[i + 1];
                dg * dw0 * (dw0 + eps[i] - eps[i + 1])
            })
            .sum();
        let dnu = w00.radial_deriv(self.radius)?;
        let eps_b = eps[self.n_cells - 1];
        Ok(RadialElliptic {
            tau,
            eps_boundary: eps_b,
            w0_boundary: w00.radial_value(self.radius)?,
            dnu_w0: dnu,
            boundary_form: -self.boundary_area() * eps_b * dnu,
            contrast_form,
        })
    }

    /// Implicit Euler for the radial heat equation with the shell flux at
    /// the outer radius, split into the inclusion-free twin and the response.
    pub fn time_domain(&self, tg: TimeGrid) -> Result<RadialTimeSeries, SolverError> {
        let n = self.n_cells;
        let shift = 1.0 / tg.dt();
        let gg = self.conductances(&self.gamma);
        let g1 = self.conductances(&self.uniform());
        let (l1, d1, u1m) = self.matrix(shift, &g1);
        let (lg, dg, ugm) = self.matrix(shift, &gg);
        let vols: Vec<f64> = (0..n).map(|i| self.volume(i)).collect();
        let mut flux = Vec::with_capacity(tg.n_nodes());
        let mut shell_trace = Vec::with_capacity(tg.n_nodes());
        for t in tg.nodes() {
            let hs = shell_heat_value(self.radius, t, &self.shell)?;
            flux.push(if t == 0.0 { 0.0 } else { hs.radial_deriv });
            shell_trace.push(hs.value);
        }
        let (mut u, mut e) = (vec![0.0; n], vec![0.0; n]);
        let mut reference_trace = vec![0.5 * self.dr * flux[0]];
        let mut perturbation_trace = vec![0.0];
        let mut rhs = vec![0.0; n];
        for k in 1..tg.n_nodes() {
            for i in 0..n {
                rhs[i] = vols[i] * shift * u[i];
            }
            rhs[n - 1] += self.boundary_area() * flux[k];
            u = thomas(&l1, &d1, &u1m, &rhs);
            for i in 0..n {
                rhs[i] = vols[i] * shift * e[i];
            }
            for i in 0..n - 1 {
                let dgi = gg[i] - g1[i];
                if dgi != 0.0 {
                    let f = dgi * (u[i] - u[i + 1]);
                    rhs[i] -= f;
                    rhs[i + 1] += f;
                }
            }
            e = thomas(&lg, &dg, &ugm, &rhs);
            reference_trace.push(u[n - 1] + 0.5 * self.dr * flux[k]);
            perturbation_trace.push(e[n - 1]);
        }
        Ok(RadialTimeSeries { grid: tg, flux, shell_trace, reference_trace, perturbation_trace, final_reference: u, final_perturbation: e })
    }
}

/// Radial inclusion response at one spectral parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialElliptic {
    pub tau: f64,
    pub eps_boundary: f64,
    pub w0_boundary: f64,
    pub dnu_w0: f64,
    /// `-|dOmega| eps_b d_nu w0`.
    pub boundary_form: f64,
    /// Discrete `int (gamma - 1) grad w0 . grad w`.
    pub contrast_form: f64,
}

/// Radial time-domain boundary scalars at every time node.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTimeSeries {
    pub grid: TimeGrid,
    pub flux: Vec<f64>,
    /// Free-space shell field at the outer radius.
    pub shell_trace: Vec<f64>,
    pub reference_trace: Vec<f64>,
    pub perturbation_trace: Vec<f64>,
    pub final_reference: Vec<f64>,
    pub final_perturbation: Vec<f64>,
}

/// Radial-mode solve for a list of spectral parameters or a time grid.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialProblem {
    Elliptic { taus: Vec<f64> },
    TimeDomain { grid: TimeGrid },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RadialOutput {
    Elliptic(Vec<RadialElliptic>),
    TimeDomain(RadialTimeSeries),
}

pub fn solve_radial(
    body: &BodySpec,
    inclusion: &InclusionSpec,
    shell: &ShellSource,
    n_cells: usize,
    problem: &RadialProblem,
) -> Result<RadialOutput, SolverError> {
    let setup = RadialSetup::new(body, inclusion, shell, n_cells)?;
    match problem {
        RadialProblem::Elliptic { taus } => {
            let out: Result<Vec<_>, _> = taus.par_iter().map(|&t| setup.elliptic_perturbation(t)).collect();
            Ok(RadialOutput::Elliptic(out?))
        }
        RadialProblem::TimeDomain { grid } => Ok(RadialOutput::TimeDomain(setup.time_domain(*grid)?)),
    }
}

/// Builds the box mesh matching `grid` (same cell count on every axis).
pub fn grid_mesh(body: &BodySpec, grid: &Grid) -> Result<Arc<BoundaryMesh>, SolverError> {
    if grid.n[0] != grid.n[1] || grid.n[1] != grid.n[2] {
        return Err(SolverError::MeshMismatch);
    }
    Ok(Arc::new(crate::geometry::boundary_mesh(body, grid.n[0])?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shellflux::flux_on_boundary;

    fn unit_box() -> BodySpec {
        BodySpec::Box(AxisBox::new(Point::new(-1.0, -1.0, -1.0), Point::new(1.0, 1.0, 1.0)).unwrap())
    }

    fn setup(n: usize) -> (BodySpec, Grid, Arc<BoundaryMesh>) {
        let body = unit_box();
        let grid = Grid::for_body(&body, n).unwrap();
        let mesh = grid_mesh(&body, &grid).unwrap();
        (body, grid, mesh)
    }

    #[test]
    fn grid_rejects_coarse_and_ball() {
        let b = AxisBox::new(Point::ORIGIN, Point::new(1.0, 1.0, 1.0)).unwrap();
        assert!(matches!(Grid::new(b, [8, 7, 8]), Err(SolverError::GridSize(_))));
        let ball = BodySpec::Ball(BallShape::new(Point::ORIGIN, 1.0).unwrap());
        assert!(matches!(Grid::for_body(&ball, 16), Err(SolverError::UnsupportedBody)));
    }

    #[test]
    fn boundary_cells_follow_mesh_nodes() {
        let (_, grid, mesh) = setup(8);
        let cells = grid.boundary_cells(&mesh).unwrap();
        let centers = grid.centers();
        for (node, &(c, axis)) in mesh.nodes.iter().zip(&cells) {
            let d = node.position - centers[c];
            assert!((d.dot(node.normal) - 0.5 * grid.h[axis]).abs() < 1e-14);
            assert!((d - node.normal * d.dot(node.normal)).norm() < 1e-14);
        }
    }

    #[test]
    fn medium_fractions_and_uniform() {
        let (_, grid, _) = setup(16);
        let inc = InclusionSpec::ball(BallShape::new(Point::new(0.1, 0.0, 0.0), 0.4).unwrap(), 1.5).unwrap();
        let m = MediumField::from_inclusion(&grid, &inc);
        assert!(m.gamma.iter().all(|&g| (1.0..=2.5).contains(&g)));
        let extra: f64 = m.gamma.iter().map(|g| (g - 1.0) / 1.5).sum::<f64>() * grid.cell_volume();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.4f64.powi(3);
        assert!((extra - exact).abs() < 0.02 * exact);
        assert!(MediumField::uniform(&grid).is_uniform());
    }

    #[test]
    fn helmholtz_rejects_bad_settings() {
        let (_, grid, mesh) = setup(8);
        let m = MediumField::uniform(&grid);
        let g = vec![0.0; mesh.len()];
        let bad = SolverConfig { tol: 1e-3, max_iter: 10 };
        assert!(matches!(
            solve_modified_helmholtz(&grid, &m, 1.0, &mesh, &g, None, &bad),
            Err(SolverError::Setting(_))
        ));
        assert!(solve_modified_helmholtz(&grid, &m, -1.0, &mesh, &g, None, &SolverConfig::default()).is_err());
        let starved = SolverConfig { tol: 1e-12, max_iter: 2 };
        let g1 = vec![1.0; mesh.len()];
        match solve_modified_helmholtz(&grid, &m, 0.1, &mesh, &g1, None, &starved) {
            Err(SolverError::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn constant_neumann_gives_constant_field() {
        // (Delta - tau) w = 0 with w_nu = g on a box has no constant solution
        // unless g = 0, but w = c solves (Delta - tau) w = -tau c.
        let (_, grid, mesh) = setup(10);
        let m = MediumField::uniform(&grid);
        let src = vec![2.0 * 3.0; grid.n_cells()];
        let g = vec![0.0; mesh.len()];
        let sol = solve_modified_helmholtz(&grid, &m, 3.0, &mesh, &g, Some(&src), &SolverConfig::default()).unwrap();
        assert!(sol.field.iter().all(|v| (v - 2.0).abs() < 1e-8));
    }

    #[test]
    fn reciprocity() {
        let (_, grid, mesh) = setup(12);
        let inc = InclusionSpec::ball(BallShape::new(Point::new(0.2, -0.1, 0.0), 0.45).unwrap(), 2.0).unwrap();
        let m = MediumField::from_inclusion(&grid, &inc);
        let g1: Vec<f64> = mesh.nodes.iter().map(|n| n.position.x + 0.3 * n.position.y * n.position.z).collect();
        let g2: Vec<f64> = mesh.nodes.iter().map(|n| (n.position.z * 2.0).cos() - n.position.x * n.position.y).collect();
        let cfg = SolverConfig { tol: 1e-12, max_iter: 5000 };
        let w1 = solve_modified_helmholtz(&grid, &m, 4.0, &mesh, &g1, None, &cfg).unwrap();
        let w2 = solve_modified_helmholtz(&grid, &m, 4.0, &mesh, &g2, None, &cfg).unwrap();
        let pair = |w: &[f64], g: &[f64]| mesh.nodes.iter().zip(w).zip(g).map(|((n, a), b)| n.weight * a * b).sum::<f64>();
        let (a, b) = (pair(&w1.trace, &g2), pair(&w2.trace, &g1));
        assert!((a - b).abs() < 1e-9 * a.abs().max(b.abs()), "{a} {b}");
    }

    #[test]
    fn larger_tau_shrinks_solution() {
        let (_, grid, mesh) = setup(10);
        let m = MediumField::uniform(&grid);
        let g: Vec<f64> = mesh.nodes.iter().map(|n| 1.0 + 0.5 * n.position.x).collect();
        let mut last = f64::INFINITY;
        for tau in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let sol = solve_modified_helmholtz(&grid, &m, tau, &mesh, &g, None, &SolverConfig::default()).unwrap();
            let norm = dot(&sol.field, &sol.field).sqrt();
            assert!(norm < last);
            last = norm;
        }
    }

    fn max_error_w00(n: usize, s: f64) -> f64 {
        let (_, grid, mesh) = setup(n);
        let shell = ShellSource::new(Point::new(0.1, 0.05, 0.0), 2.0, 2.6).unwrap();
        let w00 = W00::new(shell, SpectralParam::from_s(s).unwrap());
        let r = reference_field(&grid, &mesh, &w00).unwrap();
        let cfg = SolverConfig { tol: 1e-12, max_iter: 10_000 };
        let sol = solve_modified_helmholtz(&grid, &MediumField::uniform(&grid), s * s, &mesh, &r.normal_deriv, None, &cfg).unwrap();
        let scale = r.trace.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        sol.trace.iter().zip(&r.trace).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn w00_trace_converges_at_second_order() {
        let s = 2.0;
        let (e1, e2) = (max_error_w00(12, s), max_error_w00(24, s));
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "errors {e1} {e2} order {order}");
    }

    #[test]
    fn manufactured_solution_second_order() {
        let c = Point::new(0.3, -0.2, 0.1);
        let (sp, tau) = (1.7f64, 2.0f64);
        let exact = |x: Point| crate::potentials::sinhc_s(x.dist(c), sp).unwrap();
        let grad = |x: Point| {
            let d = x - c;
            let r = d.norm();
            let dr = (sp * (sp * r).cosh() - (sp * r).sinh() / r) / r;
            d * (dr / r)
        };
        let mut errs = Vec::new();
        for n in [10, 20] {
            let (_, grid, mesh) = setup(n);
            let g: Vec<f64> = mesh.nodes.iter().map(|nd| grad(nd.position).dot(nd.normal)).collect();
            let src: Vec<f64> = grid.centers().iter().map(|&x| (tau - sp * sp) * exact(x)).collect();
            let cfg = SolverConfig { tol: 1e-12, max_iter: 10_000 };
            let sol = solve_modified_helmholtz(&grid, &MediumField::uniform(&grid), tau, &mesh, &g, Some(&src), &cfg).unwrap();
            let err = grid.centers().iter().zip(&sol.field).map(|(&x, w)| (w - exact(x)).abs()).fold(0.0, f64::max);
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.8, "{errs:?} order {order}");
    }

    #[test]
    fn contrast_form_equals_consistent_boundary_form() {
        let (_, grid, mesh) = setup(12);
        let inc = InclusionSpec::ball(BallShape::new(Point::new(0.1, 0.0, 0.1), 0.4).unwrap(), 1.0).unwrap();
        let medium = MediumField::from_inclusion(&grid, &inc);
        let shell = ShellSource::new(Point::ORIGIN, 1.9, 2.4).unwrap();
        let w00 = W00::new(shell, SpectralParam::from_s(3.0).unwrap());
        let r = reference_field(&grid, &mesh, &w00).unwrap();
        let cfg = SolverConfig { tol: 1e-13, max_iter: 10_000 };
        let pert = solve_helmholtz_perturbation(&grid, &medium, 9.0, &mesh, &r.cells, &cfg).unwrap();
        // -eps . (tau V + K_1) w0 equals the contrast form identically
        let op1 = Stencil::new(&grid, &vec![1.0; grid.n_cells()]);
        let mut a1w0 = vec![0.0; grid.n_cells()];
        op1.apply(9.0, &r.cells, &mut a1w0);
        let lhs = -dot(&pert.field, &a1w0);
        assert!((lhs - pert.contrast_form).abs() < 1e-8 * lhs.abs(), "{lhs} {}", pert.contrast_form);
        assert!(pert.contrast_form > 0.0);
        // the boundary quadrature with exact Neumann data agrees to discretization order
        let bform: f64 = mesh.nodes.iter().zip(&pert.trace).zip(&r.normal_deriv).map(|((n, e), g)| -n.weight * e * g).sum();
        assert!((bform - lhs).abs() < 0.1 * lhs.abs(), "{bform} {lhs}");
    }

    #[test]
    fn uniform_medium_has_no_response() {
        let (_, grid, mesh) = setup(8);
        let r = vec![1.0; grid.n_cells()];
        let pert = solve_helmholtz_perturbation(&grid, &MediumField::uniform(&grid), 2.0, &mesh, &r, &SolverConfig::default()).unwrap();
        assert!(pert.field.iter().all(|&v| v == 0.0));
        assert_eq!(pert.contrast_form, 0.0);
    }

    #[test]
    fn zero_flux_and_steady_state() {
        let (_, grid, mesh) = setup(8);
        let tg = TimeGrid::new(0.1, 10).unwrap();
        let flux = BoundarySeries { mesh: mesh.clone(), grid: tg, kind: SeriesKind::Flux, values: vec![0.0; mesh.len() * 11] };
        let inc = InclusionSpec::ball(BallShape::new(Point::ORIGIN, 0.3).unwrap(), -0.5).unwrap();
        let medium = MediumField::from_inclusion(&grid, &inc);
        let sol = solve_heat_timedomain(&grid, &medium, &flux, None, &SolverConfig::default()).unwrap();
        assert!(sol.trace.values.iter().all(|&v| v == 0.0));
        let u0 = vec![0.75; grid.n_cells()];
        let sol = solve_heat_timedomain(&grid, &medium, &flux, Some(&u0), &SolverConfig::default()).unwrap();
        assert!(sol.final_field.iter().all(|&v| (v - 0.75).abs() < 1e-12));
    }

    #[test]
    fn maximum_principle() {
        let (_, grid, mesh) = setup(8);
        let tg = TimeGrid::new(0.05, 5).unwrap();
        let flux = BoundarySeries { mesh: mesh.clone(), grid: tg, kind: SeriesKind::Flux, values: vec![0.0; mesh.len() * 6] };
        let medium = MediumField::uniform(&grid);
        let u0: Vec<f64> = grid.centers().iter().map(|x| (x.x * 3.0).sin().abs() + x.y.max(0.0)).collect();
        let (mut lo, mut hi) = (u0.iter().cloned().fold(f64::INFINITY, f64::min), u0.iter().cloned().fold(0.0, f64::max));
        let mut u = u0;
        let cfg = SolverConfig { tol: 1e-13, max_iter: 1000 };
        for _ in 0..5 {
            let step = TimeGrid::new(0.01, 2).unwrap();
            let f = BoundarySeries { grid: step, values: vec![0.0; mesh.len() * 3], ..flux.clone() };
            u = solve_heat_timedomain(&grid, &medium, &f, Some(&u), &cfg).unwrap().final_field;
            let (l, h) = (u.iter().cloned().fold(f64::INFINITY, f64::min), u.iter().cloned().fold(0.0, f64::max));
            assert!(l >= lo - 1e-12 && h <= hi + 1e-12);
            lo = l;
            hi = h;
        }
    }

    #[test]
    fn heat_balance() {
        let (body, grid, mesh) = setup(12);
        let shell = ShellSource::new(Point::new(0.2, 0.0, 0.0), 2.0, 2.5).unwrap();
        let tg = TimeGrid::new(0.4, 40).unwrap();
        let flux = flux_on_boundary(&body, mesh.clone(), tg, &shell).unwrap();
        let inc = InclusionSpec::ball(BallShape::new(Point::ORIGIN, 0.5).unwrap(), 1.0).unwrap();
        let medium = MediumField::from_inclusion(&grid, &inc);
        let cfg = SolverConfig::default();
        let sol = solve_heat_timedomain(&grid, &medium, &flux, None, &cfg).unwrap();
        let heat = total_heat(&grid, &sol.final_field);
        let influx: f64 = (1..tg.n_nodes())
            .map(|k| tg.dt() * mesh.nodes.iter().zip(flux.time_slice(k)).map(|(n, f)| n.weight * f).sum::<f64>())
            .sum();
        assert!((heat - influx).abs() <= 40.0 * cfg.tol * influx.abs() * 10.0, "{heat} {influx}");
    }

    #[test]
    fn twin_split_matches_direct_solve() {
        let (body, grid, mesh) = setup(10);
        let shell = ShellSource::new(Point::ORIGIN, 1.9, 2.4).unwrap();
        let tg = TimeGrid::new(0.3, 30).unwrap();
        let flux = flux_on_boundary(&body, mesh.clone(), tg, &shell).unwrap();
        let inc = InclusionSpec::ball(BallShape::new(Point::ORIGIN, 0.45).unwrap(), 1.0).unwrap();
        let medium = MediumField::from_inclusion(&grid, &inc);
        let cfg = SolverConfig { tol: 1e-13, max_iter: 1000 };
        let direct = solve_heat_timedomain(&grid, &medium, &flux, None, &cfg).unwrap();
        let twin = solve_heat_twin(&grid, &medium, &flux, &cfg).unwrap();
        let total = twin.total();
        let scale = direct.trace.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in direct.trace.values.iter().zip(&total.values) {
            assert!((a - b).abs() < 1e-10 * scale);
        }
        assert!(twin.perturbation.values.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn field_dump_roundtrip() {
        let (_, grid, _) = setup(8);
        let f: Vec<f64> = (0..grid.n_cells()).map(|i| i as f64 * 0.5).collect();
        let mut buf = Vec::new();
        grid.write_field(&f, &mut buf).unwrap();
        let (g2, f2) = Grid::read_field(&buf[..]).unwrap();
        assert_eq!(g2, grid);
        assert_eq!(f2, f);
    }

    fn concentric(h: f64) -> (BodySpec, InclusionSpec, ShellSource) {
        let body = BodySpec::Ball(BallShape::new(Point::ORIGIN, 1.0).unwrap());
        let inc = InclusionSpec::ball(BallShape::new(Point::ORIGIN, 0.6).unwrap(), h).unwrap();
        let shell = ShellSource::new(Point::ORIGIN, 1.05, 1.55).unwrap();
        (body, inc, shell)
    }

    #[test]
    fn thomas_solves_tridiagonal() {
        let l = [0.0, -1.0, -1.0, -1.0];
        let d = [4.0, 4.0, 4.0, 4.0];
        let u = [-1.0, -1.0, -1.0, 0.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let rhs: Vec<f64> = (0..4)
            .map(|i| d[i] * x[i] + if i > 0 { l[i] * x[i - 1] } else { 0.0 } + if i < 3 { u[i] * x[i + 1] } else { 0.0 })
            .collect();
        let got = thomas(&l, &d, &u, &rhs);
        for (a, b) in got.iter().zip(x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn radial_rejects_off_center() {
        let (body, _, shell) = concentric(1.0);
        let inc = InclusionSpec::ball(BallShape::new(Point::new(0.1, 0.0, 0.0), 0.3).unwrap(), 1.0).unwrap();
        assert!(matches!(RadialSetup::new(&body, &inc, &shell, 100), Err(SolverError::NotConcentric(_))));
        let (_, inc, _) = concentric(1.0);
        let boxed = unit_box();
        assert!(matches!(RadialSetup::new(&boxed, &inc, &shell, 100), Err(SolverError::NotConcentric(_))));
    }

    #[test]
    fn radial_uniform_reproduces_w00() {
        let (body, _, shell) = concentric(1.0);
        let setup = RadialSetup::new(&body, &InclusionSpec::empty(), &shell, 4000).unwrap();
        for s in [2.0, 5.0, 10.0] {
            let w00 = W00::new(shell, SpectralParam::from_s(s).unwrap());
            let g = w00.radial_deriv(1.0).unwrap();
            let (_, wb) = setup.elliptic_direct(s * s, g, true);
            let exact = w00.radial_value(1.0).unwrap();
            assert!(((wb - exact) / exact).abs() < 1e-8 * s * s, "s={s}: {wb} vs {exact}");
        }
    }

    #[test]
    fn radial_elliptic_second_order() {
        let (body, _, shell) = concentric(1.0);
        let s = 4.0;
        let w00 = W00::new(shell, SpectralParam::from_s(s).unwrap());
        let g = w00.radial_deriv(1.0).unwrap();
        let exact = w00.radial_value(1.0).unwrap();
        let err = |n: usize| {
            let st = RadialSetup::new(&body, &InclusionSpec::empty(), &shell, n).unwrap();
            (st.elliptic_direct(s * s, g, true).1 - exact).abs()
        };
        let (e1, e2, e3) = (err(50), err(100), err(200));
        assert!((e1 / e2).log2() > 1.9 && (e2 / e3).log2() > 1.9, "{e1} {e2} {e3}");
    }

    #[test]
    fn radial_indicator_sign_and_forms() {
        for h in [1.0, -0.5] {
            let (body, inc, shell) = concentric(h);
            let setup = RadialSetup::new(&body, &inc, &shell, 2000).unwrap();
            for s in [5.0, 10.0, 20.0] {
                let r = setup.elliptic_perturbation(s * s).unwrap();
                assert_eq!(r.contrast_form.signum(), h.signum());
                assert!((r.boundary_form - r.contrast_form).abs() < 0.05 * r.contrast_form.abs(), "h={h} s={s} {r:?}");
            }
        }
    }

    #[test]
    fn radial_time_domain_balance() {
        let (body, inc, shell) = concentric(1.0);
        let setup = RadialSetup::new(&body, &inc, &shell, 400).unwrap();
        let tg = TimeGrid::new(0.5, 200).unwrap();
        let ts = setup.time_domain(tg).unwrap();
        let heat: f64 = (0..setup.n_cells).map(|i| setup.volume(i) * (ts.final_reference[i] + ts.final_perturbation[i])).sum();
        let influx: f64 = ts.flux[1..].iter().map(|f| f * tg.dt() * setup.boundary_area()).sum();
        assert!((heat - influx).abs() < 1e-10 * influx.abs());
        let pert_heat: f64 = (0..setup.n_cells).map(|i| setup.volume(i) * ts.final_perturbation[i]).sum();
        assert!(pert_heat.abs() < 1e-10 * influx.abs());
    }
}
