//! Free-space heat evolution of the shell datum, the boundary flux it
//! induces, and time-Laplace transforms of boundary samples.

use std::f64::consts::PI;
use std::io::{self, Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{BodySpec, BoundaryMesh, GeometryError, ShellSource};

#[derive(Debug, Error)]
pub enum FluxError {
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("time grid needs T > 0 and at least 2 steps (T = {t_end}, steps = {n_steps})")]
    TimeGrid { t_end: f64, n_steps: usize },
    #[error("Laplace parameter must be positive, got {0}")]
    Tau(f64),
    #[error("series is empty")]
    Empty,
    #[error("malformed series dump: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Uniform time nodes `t_k = k T / n`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self, FluxError> {
        if !(t_end > 0.0 && t_end.is_finite()) || n_steps < 2 {
            return Err(FluxError::TimeGrid { t_end, n_steps });
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(|k| self.node(k))
    }

    /// Composite trapezoid weights of `int_0^T e^{-tau t} g(t) dt`.
    pub fn laplace_weights(&self, tau: f64) -> Vec<f64> {
        let dt = self.dt();
        (0..self.n_nodes())
            .map(|k| {
                let end = k == 0 || k == self.n_steps;
                let w = if end { 0.5 * dt } else { dt };
                w * (-tau * self.node(k)).exp()
            })
            .collect()
    }
}

/// Below `EARLY_CUTOFF * (R2 - R1)^2` the initial datum is returned as is.
pub const EARLY_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatSample {
    pub value: f64,
    /// `d v / d r` with `r = |x - p|`.
    pub radial_deriv: f64,
}

/// `psi(rho) = (R2 - rho)(R1 - rho)` on `[R1, R2]`, zero elsewhere.
pub fn shell_datum(r: f64, shell: &ShellSource) -> f64 {
    if r >= shell.r1 && r <= shell.r2 {
        (shell.r2 - r) * (shell.r1 - r)
    } else {
        0.0
    }
}

fn shell_datum_deriv(r: f64, shell: &ShellSource) -> f64 {
    if r > shell.r1 && r < shell.r2 {
        2.0 * r - shell.r1 - shell.r2
    } else {
        0.0
    }
}

/// `int_{za}^{zb} z^k e^{-z^2} dz` for `k = 0..K`.
fn gauss_moments<const K: usize>(za: f64, zb: f64) -> [f64; K] {
    let half_sqrt_pi = 0.5 * PI.sqrt();
    let m0 = if za >= 0.0 {
        half_sqrt_pi * (libm::erfc(za) - libm::erfc(zb))
    } else if zb <= 0.0 {
        half_sqrt_pi * (libm::erfc(-zb) - libm::erfc(-za))
    } else {
        half_sqrt_pi * (libm::erf(zb) - libm::erf(za))
    };
    let (ea, eb) = ((-za * za).exp(), (-zb * zb).exp());
    let mut m = [0.0; K];
    m[0] = m0;
    if K > 1 {
        m[1] = 0.5 * (ea - eb);
    }
    let (mut pa, mut pb) = (za, zb);
    for k in 2..K {
        // m_k = -[z^{k-1} e^{-z^2}/2] + (k-1)/2 m_{k-2}
        m[k] = 0.5 * (pa * ea - pb * eb) + 0.5 * (k as f64 - 1.0) * m[k - 2];
        pa *= za;
        pb *= zb;
    }
    m
}

/// Taylor coefficients of the polynomial `coeffs` (monomial basis) about `c`.
fn shift_poly<const N: usize>(coeffs: [f64; N], c: f64) -> [f64; N] {
    let mut a = coeffs;
    for i in 0..N {
        for j in (i..N - 1).rev() {
            a[j] += c * a[j + 1];
        }
    }
    a
}

/// `int_a^b P(rho) exp(-(rho - c)^2 / (4t)) d rho` with `P` of degree < N.
fn gauss_poly_integral<const N: usize>(coeffs: [f64; N], c: f64, t: f64, a: f64, b: f64) -> f64 {
    let sigma = 2.0 * t.sqrt();
    let taylor = shift_poly(coeffs, c);
    let m: [f64; N] = gauss_moments((a - c) / sigma, (b - c) / sigma);
    let mut sum = 0.0;
    let mut sk = 1.0;
    for k in 0..N {
        sum += taylor[k] * sk * m[k];
        sk *= sigma;
    }
    sigma * sum
}

/// Odd orders used by the small-radius expansion.
const SERIES_ORDERS: [usize; 6] = [1, 3, 5, 7, 9, 11];
/// Below `SERIES_RADIUS * 2 sqrt(t)` the expansion about `r = 0` is used.
const SERIES_RADIUS: f64 = 0.1;

/// `G^{(n)}(0)` for the odd orders in [`SERIES_ORDERS`], where
/// `G(r) = r sqrt(4 pi t) v(r, t)`.
fn odd_derivatives_at_origin(q: [f64; 4], t: f64, r1: f64, r2: f64) -> [f64; 6] {
    let sigma = 2.0 * t.sqrt();
    // Hermite H_n(z) in monomial basis, then z = rho / sigma
    let mut h_prev = [0.0f64; 12];
    let mut h = [0.0f64; 12];
    h_prev[0] = 1.0;
    h[1] = 2.0;
    let mut out = [0.0; 6];
    let mut n = 1;
    let mut slot = 0;
    loop {
        if n == SERIES_ORDERS[slot] {
            let mut poly = [0.0f64; 16];
            let mut scale = 1.0;
            for (k, hk) in h.iter().enumerate() {
                if *hk != 0.0 {
                    for (j, qj) in q.iter().enumerate() {
                        poly[k + j] += hk * scale * qj;
                    }
                }
                scale /= sigma;
            }
            // d^n/dr^n [K(rho - r) - K(rho + r)] at r = 0 is -2 K^{(n)}(rho) for odd n
            out[slot] = 2.0 * sigma.powi(-(n as i32)) * gauss_poly_integral(poly, 0.0, t, r1, r2);
            slot += 1;
            if slot == SERIES_ORDERS.len() {
                return out;
            }
        }
        let mut next = [0.0f64; 12];
        for k in 0..11 {
            next[k + 1] += 2.0 * h[k];
        }
        for k in 0..12 {
            next[k] -= 2.0 * n as f64 * h_prev[k];
        }
        h_prev = h;
        h = next;
        n += 1;
    }
}

/// Radial heat field `v(r, t)` of the shell datum and `d v / d r`.
pub fn shell_heat_value(r: f64, t: f64, shell: &ShellSource) -> Result<HeatSample, FluxError> {
    if t < 0.0 || t.is_nan() {
        return Err(FluxError::NegativeTime(t));
    }
    if r < 0.0 || r.is_nan() {
        return Err(FluxError::Geometry(GeometryError::NonPositiveRadius(r)));
    }
    let width = shell.r2 - shell.r1;
    if t < EARLY_CUTOFF * width * width {
        return Ok(HeatSample {
            value: shell_datum(r, shell),
            radial_deriv: shell_datum_deriv(r, shell),
        });
    }
    let (r1, r2) = (shell.r1, shell.r2);
    // q(rho) = rho psi(rho) = rho^3 - (R1+R2) rho^2 + R1 R2 rho
    let q = [0.0, r1 * r2, -(r1 + r2), 1.0, 0.0, 0.0];
    let norm = 1.0 / (4.0 * PI * t).sqrt();
    if r < SERIES_RADIUS * 2.0 * t.sqrt() {
        let d = odd_derivatives_at_origin([q[0], q[1], q[2], q[3]], t, r1, r2);
        let (mut value, mut deriv) = (0.0, 0.0);
        let mut fact = 1.0;
        for (slot, &n) in SERIES_ORDERS.iter().enumerate() {
            if n > 1 {
                fact *= (n - 1) as f64 * n as f64;
                deriv += d[slot] * (n - 1) as f64 * r.powi(n as i32 - 2) / fact;
            }
            value += d[slot] * r.powi(n as i32 - 1) / fact;
        }
        return Ok(HeatSample { value: norm * value, radial_deriv: norm * deriv });
    }
    let g = gauss_poly_integral(q, r, t, r1, r2) - gauss_poly_integral(q, -r, t, r1, r2);
    // G'(r) = (1/2t) int q [(rho - r) e^- + (rho + r) e^+]
    let times_shifted = |shift: f64| {
        let mut out = [0.0; 6];
        for k in 0..5 {
            out[k + 1] += q[k];
            out[k] -= shift * q[k];
        }
        out
    };
    let gp = (gauss_poly_integral(times_shifted(r), r, t, r1, r2)
        + gauss_poly_integral(times_shifted(-r), -r, t, r1, r2))
        / (2.0 * t);
    Ok(HeatSample {
        value: norm * g / r,
        radial_deriv: norm * (gp - g / r) / r,
    })
}

/// Which boundary quantity a [`BoundarySeries`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// Normal heat flux `f = grad v . nu`.
    Flux,
    /// Boundary temperature.
    Temperature,
}

/// Samples on `mesh x grid`, stored time-major: `values[k * n_nodes + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySeries {
    pub mesh: Arc<BoundaryMesh>,
    pub grid: TimeGrid,
    pub kind: SeriesKind,
    pub values: Vec<f64>,
}

/// Boundary flux samples.
pub type FluxRecord = BoundarySeries;

impl BoundarySeries {
    pub fn n_nodes(&self) -> usize {
        self.mesh.len()
    }

    pub fn at(&self, node: usize, k: usize) -> f64 {
        self.values[k * self.n_nodes() + node]
    }

    pub fn time_slice(&self, k: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.values[k * n..(k + 1) * n]
    }

    /// CSV with columns `node_id,x,y,z,t,value`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "node_id,x,y,z,t,value")?;
        for k in 0..self.grid.n_nodes() {
            let t = self.grid.node(k);
            for (i, node) in self.mesh.nodes.iter().enumerate() {
                let p = node.position;
                writeln!(
                    w,
                    "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    p.x,
                    p.y,
                    p.z,
                    t,
                    self.at(i, k)
                )?;
            }
        }
        Ok(())
    }

    /// Little-endian dump: magic `ENCLBS01`, `u64` node count, `u64` time
    /// node count, `f64` T, then the values row-major by time.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.n_nodes() as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n_nodes() as u64).to_le_bytes())?;
        w.write_all(&self.grid.t_end.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`write_binary`](Self::write_binary) back onto `mesh`.
    pub fn read_binary<R: Read>(mut r: R, mesh: Arc<BoundaryMesh>, kind: SeriesKind) -> Result<Self, FluxError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(FluxError::Format("bad magic".into()));
        }
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let n_nodes = u64::from_le_bytes(buf) as usize;
        r.read_exact(&mut buf)?;
        let n_times = u64::from_le_bytes(buf) as usize;
        r.read_exact(&mut buf)?;
        let t_end = f64::from_le_bytes(buf);
        if n_nodes != mesh.len() || n_times < 3 {
            return Err(FluxError::Format(format!("{n_nodes} nodes x {n_times} times does not fit mesh")));
        }
        let grid = TimeGrid::new(t_end, n_times - 1)?;
        let mut values = Vec::with_capacity(n_nodes * n_times);
        for _ in 0..n_nodes * n_times {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Ok(Self { mesh, grid, kind, values })
    }
}

const BINARY_MAGIC: &[u8; 8] = b"ENCLBS01";

fn sample_boundary<F>(mesh: Arc<BoundaryMesh>, grid: TimeGrid, kind: SeriesKind, shell: &ShellSource, pick: F) -> Result<BoundarySeries, FluxError>
where
    F: Fn(HeatSample, f64) -> f64 + Sync,
{
    let n = mesh.len();
    let geo: Vec<(f64, f64)> = mesh
        .nodes
        .iter()
        .map(|node| {
            let d = node.position - shell.p;
            let r = d.norm();
            let align = if r > 0.0 { d.dot(node.normal) / r } else { 0.0 };
            (r, align)
        })
        .collect();
    let rows: Result<Vec<Vec<f64>>, FluxError> = (0..grid.n_nodes())
        .into_par_iter()
        .map(|k| {
            let t = grid.node(k);
            geo.iter()
                .map(|&(r, align)| shell_heat_value(r, t, shell).map(|hs| pick(hs, align)))
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(n * grid.n_nodes());
    for row in rows? {
        values.extend(row);
    }
    Ok(BoundarySeries { mesh, grid, kind, values })
}

/// `f(x_i, t_k) = d_r v(|x_i - p|, t_k) ((x_i - p)/|x_i - p|) . nu(x_i)`.
pub fn flux_on_boundary(
    body: &BodySpec,
    mesh: Arc<BoundaryMesh>,
    grid: TimeGrid,
    shell: &ShellSource,
) -> Result<FluxRecord, FluxError> {
    crate::geometry::validate_shell(body, shell)?;
    sample_boundary(mesh, grid, SeriesKind::Flux, shell, |hs, align| hs.radial_deriv * align)
}

/// `v(x_i, t_k)` on the boundary nodes (the free-space reference temperature).
pub fn shell_trace_on_boundary(
    mesh: Arc<BoundaryMesh>,
    grid: TimeGrid,
    shell: &ShellSource,
) -> Result<BoundarySeries, FluxError> {
    sample_boundary(mesh, grid, SeriesKind::Temperature, shell, |hs, _| hs.value)
}

/// Per-node `int_0^T e^{-tau t} value(x_i, t) dt` by the composite trapezoid rule.
pub fn laplace_boundary(series: &BoundarySeries, tau: f64) -> Result<Vec<f64>, FluxError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(FluxError::Tau(tau));
    }
    if series.values.is_empty() {
        return Err(FluxError::Empty);
    }
    Ok(laplace_rows(&series.values, series.n_nodes(), &series.grid, tau))
}

/// Trapezoid Laplace transform of time-major rows of width `n`.
pub fn laplace_rows(values: &[f64], n: usize, grid: &TimeGrid, tau: f64) -> Vec<f64> {
    let weights = grid.laplace_weights(tau);
    let mut out = vec![0.0; n];
    for (k, w) in weights.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(&values[k * n..(k + 1) * n]) {
            *o += w * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{boundary_mesh, AxisBox, BallShape, Point};
    use crate::quadrature::{integrate_with_breaks, Tolerance};

    fn shell() -> ShellSource {
        ShellSource::new(Point::ORIGIN, 1.05, 1.55).unwrap()
    }

    #[test]
    fn gauss_moments_match_quadrature() {
        for &(za, zb) in &[(-1.0, 2.0), (0.5, 3.0), (-4.0, -0.2), (2.0, 6.0)] {
            let m: [f64; 6] = gauss_moments(za, zb);
            for (k, mk) in m.iter().enumerate() {
                let q = integrate_with_breaks(|z: f64| z.powi(k as i32) * (-z * z).exp(), &[za, zb], Tolerance::relative(1e-14))
                    .unwrap()
                    .value;
                assert!((mk - q).abs() <= 1e-13 * q.abs().max(1e-300) + 1e-300, "k={k} {mk} {q}");
            }
        }
    }

    #[test]
    fn mass_is_conserved() {
        let sh = shell();
        let mass0 = integrate_with_breaks(
            |r: f64| shell_datum(r, &sh) * r * r,
            &[sh.r1, sh.r2],
            Tolerance::relative(1e-14),
        )
        .unwrap()
        .value;
        for t in [1e-3f64, 0.05, 0.4, 2.0] {
            let upper = sh.r2 + 12.0 * t.sqrt() * 2.0;
            let breaks: Vec<f64> = (0..=40).map(|i| upper * i as f64 / 40.0).collect();
            let m = integrate_with_breaks(
                |r: f64| shell_heat_value(r, t, &sh).unwrap().value * r * r,
                &breaks,
                Tolerance::relative(1e-12),
            )
            .unwrap()
            .value;
            assert!(((m - mass0) / mass0).abs() < 1e-8, "t={t}: {m} vs {mass0}");
        }
    }

    #[test]
    fn closed_form_matches_volume_quadrature() {
        let sh = shell();
        let tol = Tolerance::relative(1e-11);
        for &(r, t) in &[(0.0, 0.1), (0.02, 0.1), (0.7, 0.03), (1.2, 0.05), (1.9, 0.5), (3.0, 0.2)] {
            let inner = |rho: f64| {
                let mu_int = integrate_with_breaks(
                    |mu: f64| (-(r * r + rho * rho - 2.0 * r * rho * mu) / (4.0 * t)).exp(),
                    &[-1.0, 0.0, 1.0],
                    tol,
                )
                .unwrap()
                .value;
                2.0 * PI * rho * rho * shell_datum(rho, &sh) * mu_int
            };
            let breaks: Vec<f64> = (0..=8).map(|i| sh.r1 + (sh.r2 - sh.r1) * i as f64 / 8.0).collect();
            let oracle = integrate_with_breaks(inner, &breaks, tol).unwrap().value / (4.0 * PI * t).powf(1.5);
            let v = shell_heat_value(r, t, &sh).unwrap().value;
            assert!((v - oracle).abs() <= 1e-9 * oracle.abs(), "r={r} t={t}: {v} vs {oracle}");
        }
    }

    #[test]
    fn early_time_recovers_datum() {
        let sh = shell();
        let rm = 0.5 * (sh.r1 + sh.r2);
        let t = 1e-6 * (sh.r2 - sh.r1).powi(2);
        let v = shell_heat_value(rm, t, &sh).unwrap().value;
        assert!((v - shell_datum(rm, &sh)).abs() < 1e-4);
        assert!(v < 0.0);
        assert!(matches!(shell_heat_value(0.5, -1.0, &sh), Err(FluxError::NegativeTime(_))));
    }

    #[test]
    fn radial_derivative_matches_finite_difference() {
        let sh = shell();
        for &(r, t) in &[(0.4, 0.05), (1.0, 0.01), (1.3, 0.2), (2.5, 0.3), (1e-3, 0.1)] {
            let h = 1e-6;
            let fd = (shell_heat_value(r + h, t, &sh).unwrap().value - shell_heat_value(r - h, t, &sh).unwrap().value) / (2.0 * h);
            let d = shell_heat_value(r, t, &sh).unwrap().radial_deriv;
            assert!((d - fd).abs() < 1e-6 * fd.abs().max(1e-3), "r={r} t={t}: {d} vs {fd}");
        }
        let at0 = shell_heat_value(0.0, 0.1, &sh).unwrap();
        let near = shell_heat_value(1e-5, 0.1, &sh).unwrap();
        assert!((at0.value - near.value).abs() < 1e-8 * at0.value.abs());
    }

    #[test]
    fn flux_is_constant_on_concentric_sphere_and_zero_at_start() {
        let sh = shell();
        let body = BodySpec::Ball(BallShape::new(Point::ORIGIN, 1.0).unwrap());
        let mesh = Arc::new(boundary_mesh(&body, 8).unwrap());
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let f = flux_on_boundary(&body, mesh, grid, &sh).unwrap();
        assert!(f.time_slice(0).iter().all(|&v| v == 0.0));
        for k in 1..=10 {
            let row = f.time_slice(k);
            for v in row {
                assert!((v - row[0]).abs() <= 1e-10 * row[0].abs(), "k={k} {v} {}", row[0]);
            }
        }
    }

    #[test]
    fn flux_rejects_invalid_shell() {
        let body = BodySpec::Ball(BallShape::new(Point::ORIGIN, 1.2).unwrap());
        let mesh = Arc::new(boundary_mesh(&body, 4).unwrap());
        let grid = TimeGrid::new(0.5, 10).unwrap();
        assert!(matches!(
            flux_on_boundary(&body, mesh, grid, &shell()),
            Err(FluxError::Geometry(GeometryError::ShellContainment { .. }))
        ));
    }

    #[test]
    fn flux_depends_on_radius_and_alignment_only() {
        let sh = ShellSource::new(Point::ORIGIN, 2.0, 2.5).unwrap();
        let body = BodySpec::Box(AxisBox::new(Point::new(-1.0, -1.0, -1.0), Point::new(1.0, 1.0, 1.0)).unwrap());
        let mesh = Arc::new(boundary_mesh(&body, 6).unwrap());
        let grid = TimeGrid::new(0.5, 5).unwrap();
        let f = flux_on_boundary(&body, mesh.clone(), grid, &sh).unwrap();
        // node on -x face mirrors node on +x face
        let n2 = 36;
        for k in 1..=5 {
            for i in 0..n2 {
                let a = f.at(i, k);
                let b = f.at(n2 + i, k);
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn early_flux_is_small() {
        let sh = ShellSource::new(Point::ORIGIN, 1.3, 1.8).unwrap();
        let body = BodySpec::Ball(BallShape::new(Point::ORIGIN, 1.0).unwrap());
        let d: f64 = 0.3;
        for t in [d * d / 200.0, d * d / 100.0, d * d / 40.0] {
            let fl = shell_heat_value(1.0, t, &sh).unwrap().radial_deriv.abs();
            assert!(fl <= (-d * d / (8.0 * t)).exp(), "t={t}: {fl}");
        }
        let _ = body;
    }

    #[test]
    fn laplace_of_constant() {
        let mesh = Arc::new(boundary_mesh(&BodySpec::Ball(BallShape::new(Point::ORIGIN, 1.0).unwrap()), 2).unwrap());
        let grid = TimeGrid::new(1.5, 3000).unwrap();
        let n = mesh.len();
        let series = BoundarySeries { mesh, grid, kind: SeriesKind::Temperature, values: vec![2.0; n * grid.n_nodes()] };
        let tau = 3.0;
        let exact = 2.0 * (1.0 - (-tau * 1.5f64).exp()) / tau;
        for v in laplace_boundary(&series, tau).unwrap() {
            assert!((v - exact).abs() < 1e-6);
        }
        assert!(matches!(laplace_boundary(&series, 0.0), Err(FluxError::Tau(_))));
    }

    #[test]
    fn laplace_tau_derivative() {
        let sh = shell();
        let body = BodySpec::Ball(BallShape::new(Point::ORIGIN, 1.0).unwrap());
        let mesh = Arc::new(boundary_mesh(&body, 2).unwrap());
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let f = flux_on_boundary(&body, mesh, grid, &sh).unwrap();
        let tau = 20.0;
        let h = 1e-4;
        let plus = laplace_boundary(&f, tau + h).unwrap()[0];
        let minus = laplace_boundary(&f, tau - h).unwrap()[0];
        let fd = (plus - minus) / (2.0 * h);
        let tf: Vec<f64> = (0..grid.n_nodes())
            .flat_map(|k| f.time_slice(k).iter().map(move |v| v * grid.node(k)).collect::<Vec<_>>())
            .collect();
        let moment = laplace_rows(&tf, f.n_nodes(), &grid, tau)[0];
        assert!((fd + moment).abs() < 1e-6 * moment.abs(), "{fd} {moment}");
    }

    #[test]
    fn binary_roundtrip() {
        let sh = shell();
        let body = BodySpec::Ball(BallShape::new(Point::ORIGIN, 1.0).unwrap());
        let mesh = Arc::new(boundary_mesh(&body, 3).unwrap());
        let grid = TimeGrid::new(0.7, 4).unwrap();
        let f = flux_on_boundary(&body, mesh.clone(), grid, &sh).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 8 + 8 + 8 + 8 * f.values.len());
        let back = BoundarySeries::read_binary(&buf[..], mesh, SeriesKind::Flux).unwrap();
        assert_eq!(back, f);
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + f.values.len());
    }
}
