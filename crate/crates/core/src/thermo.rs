//! Thermoelastic extension: the elastic shell source, the divergence-free
//! Laplace-domain profile it generates inside the shell, and the
//! touching-ball integrals that bound the indicator's decay rate.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{BallShape, GeometryError, Point, ShellSource};
use crate::indicator::{least_squares, WindowClass};
use crate::potentials::{m_coeff, scaled_sinhc_deriv};
use crate::quadrature::{integrate_with_breaks, QuadratureError, Tolerance};

#[derive(Debug, Error)]
pub enum ThermoError {
    #[error("invalid elastic parameters: {0}")]
    Params(String),
    #[error("direction must be a unit vector, |a| = {0}")]
    NotUnit(f64),
    #[error("point at |x - p| = {r} is not inside the inner shell radius {r1}")]
    OutsideInnerBall { r: f64, r1: f64 },
    #[error("radius {r} is outside the lens: cos(theta) = {cos}")]
    Lens { r: f64, cos: f64 },
    #[error("touching ball: {0}")]
    Touching(String),
    #[error("tau must be positive and finite, got {0}")]
    Tau(f64),
    #[error("need at least {needed} tau values, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Material constants of the isotropic thermoelastic body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticParams {
    pub rho: f64,
    pub mu: f64,
    pub lambda: f64,
    /// Stress-temperature modulus.
    pub m: f64,
    pub c: f64,
    pub k: f64,
    pub theta0: f64,
}

impl ElasticParams {
    pub fn new(rho: f64, mu: f64, lambda: f64, m: f64, c: f64, k: f64, theta0: f64) -> Result<Self, ThermoError> {
        let p = Self { rho, mu, lambda, m, c, k, theta0 };
        p.validate()?;
        Ok(p)
    }

    /// Unit density, shear modulus and thermal constants.
    pub fn unit() -> Self {
        Self { rho: 1.0, mu: 1.0, lambda: 1.0, m: 1.0, c: 1.0, k: 1.0, theta0: 1.0 }
    }

    pub fn validate(&self) -> Result<(), ThermoError> {
        let mut bad = Vec::new();
        let all = [self.rho, self.mu, self.lambda, self.m, self.c, self.k, self.theta0];
        if all.iter().any(|v| !v.is_finite()) {
            bad.push("all constants must be finite".to_string());
        }
        if !(self.mu > 0.0) {
            bad.push(format!("mu = {} must be positive", self.mu));
        }
        if !(3.0 * self.lambda + 2.0 * self.mu > 0.0) {
            bad.push(format!("3 lambda + 2 mu = {} must be positive", 3.0 * self.lambda + 2.0 * self.mu));
        }
        if self.m == 0.0 {
            bad.push("m must be nonzero".to_string());
        }
        for (name, v) in [("rho", self.rho), ("c", self.c), ("k", self.k), ("theta0", self.theta0)] {
            if !(v > 0.0) {
                bad.push(format!("{name} = {v} must be positive"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ThermoError::Params(bad.join("; ")))
        }
    }

    /// `sqrt(rho / mu)`: inverse shear wave speed.
    pub fn slowness(&self) -> f64 {
        (self.rho / self.mu).sqrt()
    }
}

fn check_unit(a: Point) -> Result<Point, ThermoError> {
    let n = a.norm();
    if !((n - 1.0).abs() <= 1e-12) {
        return Err(ThermoError::NotUnit(n));
    }
    Ok(a)
}

/// Shell datum for the elastic velocity, polarized along `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellElasticSource {
    pub shell: ShellSource,
    pub a: Point,
}

impl ShellElasticSource {
    pub fn new(shell: ShellSource, a: Point) -> Result<Self, ThermoError> {
        Ok(Self { shell, a: check_unit(a)? })
    }
}

/// `psi(r) = (R1 - r)^2 (R2 - r)^2` on the shell, zero elsewhere.
pub fn elastic_weight(r: f64, shell: &ShellSource) -> f64 {
    if r >= shell.r1 && r <= shell.r2 {
        let g = (r - shell.r1) * (shell.r2 - r);
        g * g
    } else {
        0.0
    }
}

/// `d psi / dr`; continuous, with zeros at both shell radii.
pub fn elastic_weight_deriv(r: f64, shell: &ShellSource) -> f64 {
    if r > shell.r1 && r < shell.r2 {
        2.0 * (r - shell.r1) * (shell.r2 - r) * (shell.r1 + shell.r2 - 2.0 * r)
    } else {
        0.0
    }
}

/// Initial velocity potential `psi a` and the velocity `curl(psi a) = grad psi x a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticDatum {
    pub potential: Point,
    pub curl: Point,
}

pub fn elastic_initial_velocity(x: Point, src: &ShellElasticSource) -> ElasticDatum {
    let d = x - src.shell.p;
    let r = d.norm();
    let potential = src.a * elastic_weight(r, &src.shell);
    let dpsi = elastic_weight_deriv(r, &src.shell);
    let curl = if dpsi == 0.0 { Point::ORIGIN } else { (d * (dpsi / r)).cross(src.a) };
    ElasticDatum { potential, curl }
}

/// Laplace-domain displacement `w` solving `(mu Lap - rho tau^2) w + rho curl(psi a) = 0`
/// in free space, evaluated inside the inner shell radius where it is
/// `(rho/mu) M(s) e^{-s R1} grad[sinh(s r)/r] x a` with `s = tau sqrt(rho/mu)`.
pub fn ws0_closed(x: Point, tau: f64, src: &ShellElasticSource, params: &ElasticParams) -> Result<Point, ThermoError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(ThermoError::Tau(tau));
    }
    let d = x - src.shell.p;
    let r = d.norm();
    let (r1, r2) = (src.shell.r1, src.shell.r2);
    if !(r < r1) {
        return Err(ThermoError::OutsideInnerBall { r, r1 });
    }
    if r == 0.0 {
        return Ok(Point::ORIGIN);
    }
    let s = tau * params.slowness();
    let amp = params.rho / params.mu * m_coeff(s, r1, r2) * scaled_sinhc_deriv(r, s, r1);
    Ok((d * (amp / r)).cross(src.a))
}

/// `cos(theta(r))` of the spherical cap `{|x - p| = r} ∩ B` for the touching
/// ball `B` of radius `delta` tangent at distance `r_d` from `p`.
pub fn cos_theta(r: f64, r_d: f64, delta: f64) -> Result<f64, ThermoError> {
    let centre = r_d - delta;
    if !(r > 0.0 && centre > 0.0) {
        return Err(ThermoError::Lens { r, cos: f64::NAN });
    }
    let cos = 1.0 - one_minus_cos(r, r_d, delta);
    if !(-1.0..=1.0).contains(&cos) {
        return Err(ThermoError::Lens { r, cos });
    }
    Ok(cos)
}

/// `1 - cos(theta(r))` in factored form, accurate near the contact radius.
fn one_minus_cos(r: f64, r_d: f64, delta: f64) -> f64 {
    (r_d - r) * (r - r_d + 2.0 * delta) / (2.0 * r * (r_d - delta))
}

/// `C'` of the linear lower bound `1 - cos(theta(r)) >= C' (r_d - r)` on
/// `r_d - delta' < r < r_d`.
pub fn cap_slope_bound(r_d: f64, delta: f64, delta_prime: f64) -> f64 {
    (delta - delta_prime) / (r_d * (r_d - delta))
}

/// Closed forms of the two height integrals over a cap of half-angle theta:
/// `int_0^{r sin} s sqrt(r^2 - s^2) ds` and `int_0^{r sin} s^3 / sqrt(r^2 - s^2) ds`,
/// written through `u = 1 - cos(theta)`.
pub fn cap_height_integrals(r: f64, one_minus_cos: f64) -> (f64, f64) {
    let u = one_minus_cos;
    let c = 1.0 - u;
    let r3 = r * r * r;
    // 1 - c^3 = u (1 + c + c^2);  u - (1 - c^3)/3 = u^2 (2 + c) / 3
    (r3 / 3.0 * u * (1.0 + c + c * c), r3 * u * u * (2.0 + c) / 3.0)
}

/// Contact geometry of an interior ball `B = B_delta(q - delta nu_q)` touching
/// the inclusion boundary at its farthest point `q` from `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TouchingBallGeom {
    pub p: Point,
    pub q: Point,
    pub nu_q: Point,
    pub r_d: f64,
    pub delta: f64,
    pub delta_prime: f64,
    /// `b`, `c`, `nu_q` form a right-handed orthonormal frame.
    pub b: Point,
    pub c: Point,
}

impl TouchingBallGeom {
    pub fn new(p: Point, q: Point, delta: f64, delta_prime: f64) -> Result<Self, ThermoError> {
        if !(p.is_finite() && q.is_finite()) {
            return Err(GeometryError::NonFinite("touching point").into());
        }
        let r_d = q.dist(p);
        if !(r_d > 0.0) {
            return Err(ThermoError::Touching("contact point coincides with the probe point".into()));
        }
        if !(0.0 < delta_prime && delta_prime < delta) {
            return Err(ThermoError::Touching(format!("need 0 < delta' < delta, got {delta_prime}, {delta}")));
        }
        // relative slack so a ball through the probe point survives rounding
        if !(2.0 * delta <= r_d * (1.0 + 1e-12)) {
            return Err(ThermoError::Touching(format!("ball of radius {delta} would contain the probe point")));
        }
        let nu_q = (q - p) * (1.0 / r_d);
        let helper = [Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0), Point::new(0.0, 0.0, 1.0)]
            .into_iter()
            .min_by(|u, v| u.dot(nu_q).abs().total_cmp(&v.dot(nu_q).abs()))
            .unwrap();
        let b = helper.cross(nu_q).normalized();
        let c = nu_q.cross(b);
        Ok(Self { p, q, nu_q, r_d, delta, delta_prime, b, c })
    }

    /// Touching ball for a ball inclusion, with `delta = radius / 2` and
    /// `delta' = delta / 2`.
    pub fn for_ball(p: Point, ball: &BallShape) -> Result<Self, ThermoError> {
        let off = ball.center - p;
        let dir = if off.norm() > 0.0 { off.normalized() } else { Point::new(0.0, 0.0, 1.0) };
        let delta = 0.5 * ball.radius;
        Self::new(p, ball.center + dir * ball.radius, delta, 0.5 * delta)
    }

    pub fn with_deltas(&self, delta: f64, delta_prime: f64) -> Result<Self, ThermoError> {
        Self::new(self.p, self.q, delta, delta_prime)
    }

    pub fn ball_center(&self) -> Point {
        self.q - self.nu_q * self.delta
    }

    /// Weights `(|nu x a|^2, |b x a|^2 + |c x a|^2)` of the two cap moments.
    pub fn direction_weights(&self, a: Point) -> (f64, f64) {
        (self.nu_q.cross(a).norm_sq(), self.b.cross(a).norm_sq() + self.c.cross(a).norm_sq())
    }

    /// `int_{cap(r)} |omega x a|^2 dsigma / r^2 * r^2` collapsed to the two
    /// moment weights; valid for `r_d - 2 delta < r < r_d`.
    fn cap_weight(&self, r: f64, weights: (f64, f64)) -> f64 {
        let u = one_minus_cos(r, self.r_d, self.delta);
        let (normal, tangent) = cap_height_integrals(r, u);
        (2.0 * PI * normal * weights.0 + PI * tangent * weights.1) / r
    }

    /// `int f(|x - p|) |((x - p)/|x - p|) x a|^2 dx` over `B ∩ {|x - p| > r_lo}`,
    /// with `f` supplied as a function of `r`. `scale` sets break points.
    fn radial_integral<F: Fn(f64) -> f64 + Sync>(
        &self,
        a: Point,
        r_lo: f64,
        scale: f64,
        f: F,
    ) -> Result<f64, ThermoError> {
        let weights = self.direction_weights(a);
        let mut breaks = vec![r_lo];
        for k in [64.0, 16.0, 4.0, 1.0] {
            let b = self.r_d - k / scale;
            if b > r_lo {
                breaks.push(b);
            }
        }
        breaks.push(self.r_d);
        let tol = Tolerance { abs: 1e-300, rel: 1e-11, max_intervals: 4000 };
        Ok(integrate_with_breaks(|r| f(r) * self.cap_weight(r, weights), &breaks, tol)?.value)
    }
}

/// `e^{-2 tau R_D} int e^{2 tau |x - p|} |((x-p)/|x-p|) x a|^2 dx` over the
/// lens `B \ B_{R_D - delta'}(p)`.
pub fn touching_ball_integral_scaled(tau: f64, geom: &TouchingBallGeom, a: Point) -> Result<f64, ThermoError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(ThermoError::Tau(tau));
    }
    let a = check_unit(a)?;
    let r_d = geom.r_d;
    geom.radial_integral(a, r_d - geom.delta_prime, 2.0 * tau, |r| (2.0 * tau * (r - r_d)).exp())
}

/// The lens integral itself; overflows to infinity once `2 tau R_D` passes ~709.
pub fn touching_ball_integral(tau: f64, geom: &TouchingBallGeom, a: Point) -> Result<f64, ThermoError> {
    Ok(touching_ball_integral_scaled(tau, geom, a)? * (2.0 * tau * geom.r_d).exp())
}

/// `log( rho tau^2 ||w||^2_{L2(B)} )` for the closed-form displacement `w`
/// over the whole touching ball.
pub fn log_displacement_energy(
    tau: f64,
    src: &ShellElasticSource,
    geom: &TouchingBallGeom,
    params: &ElasticParams,
) -> Result<f64, ThermoError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(ThermoError::Tau(tau));
    }
    if geom.p.dist(src.shell.p) > 1e-12 * (1.0 + src.shell.r1) {
        return Err(ThermoError::Touching("touching geometry and shell use different centres".into()));
    }
    if !(geom.r_d < src.shell.r1) {
        return Err(ThermoError::OutsideInnerBall { r: geom.r_d, r1: src.shell.r1 });
    }
    let s = tau * params.slowness();
    let r_d = geom.r_d;
    let r_lo = (r_d - 2.0 * geom.delta).max(0.0);
    // |w| = (rho/mu) |M| e^{-s R1} |g'(r)| |omega x a|, with the exponential
    // factored at R_D so the integrand stays O(1).
    let radial = geom.radial_integral(src.a, r_lo, 2.0 * s, |r| {
        let g = scaled_sinhc_deriv(r, s, r_d);
        g * g
    })?;
    let m = m_coeff(s, src.shell.r1, src.shell.r2);
    let amp = params.rho / params.mu * m;
    Ok((params.rho * tau * tau * amp * amp * radial).ln() - 2.0 * s * (src.shell.r1 - r_d))
}

/// Least-squares fit `y = c + rate t - alpha log t`; `alpha` is zero when
/// `with_prefactor` is false.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub rate: f64,
    pub alpha: f64,
    pub intercept: f64,
    pub residual: f64,
}

pub fn exponent_fit(t: &[f64], y: &[f64], with_prefactor: bool) -> Result<ExponentFit, ThermoError> {
    let needed = if with_prefactor { 4 } else { 3 };
    if t.len() < needed || t.len() != y.len() {
        return Err(ThermoError::TooFewPoints { needed, got: t.len().min(y.len()) });
    }
    let mut cols = vec![vec![1.0; t.len()], t.to_vec()];
    if with_prefactor {
        cols.push(t.iter().map(|v| -v.ln()).collect());
    }
    let (c, residual) = least_squares(&cols, y);
    Ok(ExponentFit { intercept: c[0], rate: c[1], alpha: if with_prefactor { c[2] } else { 0.0 }, residual })
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Orientation of the polarization relative to the contact normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    Perpendicular,
    Parallel,
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarization::Perpendicular => "perp",
            Polarization::Parallel => "parallel",
        })
    }
}

impl Polarization {
    pub fn direction(&self, geom: &TouchingBallGeom) -> Point {
        match self {
            Polarization::Perpendicular => geom.b,
            Polarization::Parallel => geom.nu_q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensRecord {
    pub tau: f64,
    pub value: f64,
    /// `e^{-2 tau R_D}` times the value.
    pub scaled: f64,
    pub case: Polarization,
}

/// Lens integral for both polarizations, with the fitted exponent and the
/// measured algebraic prefactor `tau^{-alpha}` of each.
#[derive(Debug, Clone, PartialEq)]
pub struct LensSweep {
    pub r_d: f64,
    pub records: Vec<LensRecord>,
    pub perp: ExponentFit,
    pub parallel: ExponentFit,
}

pub fn lens_sweep(geom: &TouchingBallGeom, taus: &[f64]) -> Result<LensSweep, ThermoError> {
    let cases = [Polarization::Perpendicular, Polarization::Parallel];
    let jobs: Vec<(Polarization, f64)> = cases.iter().flat_map(|&c| taus.iter().map(move |&t| (c, t))).collect();
    let records = jobs
        .par_iter()
        .map(|&(case, tau)| {
            let scaled = touching_ball_integral_scaled(tau, geom, case.direction(geom))?;
            Ok(LensRecord { tau, value: scaled * (2.0 * tau * geom.r_d).exp(), scaled, case })
        })
        .collect::<Result<Vec<_>, ThermoError>>()?;
    let fit = |case: Polarization| {
        let (t, y): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter(|r| r.case == case)
            .map(|r| (r.tau, r.scaled.ln() + 2.0 * r.tau * geom.r_d))
            .unzip();
        exponent_fit(&t, &y, true)
    };
    Ok(LensSweep { r_d: geom.r_d, perp: fit(Polarization::Perpendicular)?, parallel: fit(Polarization::Parallel)?, records })
}

impl LensSweep {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "tau,integral,scaled,case")?;
        for r in &self.records {
            writeln!(out, "{:.16e},{:.16e},{:.16e},{}", r.tau, r.value, r.scaled, r.case)?;
        }
        Ok(())
    }
}

/// Fitted decay rate of `rho tau^2 ||w||^2` on the touching ball against the
/// predicted `-2 sqrt(rho/mu) (R1 - R_D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCheck {
    pub taus: Vec<f64>,
    pub log_energy: Vec<f64>,
    pub fit: ExponentFit,
    pub target_rate: f64,
}

impl RateCheck {
    pub fn relative_error(&self) -> f64 {
        (self.fit.rate - self.target_rate).abs() / self.target_rate.abs()
    }

    /// Whether `e^{tau T}` times the energy decays or grows along the fit.
    pub fn window_class(&self, t_end: f64) -> WindowClass {
        if t_end + self.fit.rate > 0.0 {
            WindowClass::Grows
        } else {
            WindowClass::Decays
        }
    }

    pub fn write_summary<W: Write>(&self, mut out: W, windows: &[f64]) -> io::Result<()> {
        writeln!(out, "tau_min = {:.17e}", self.taus.first().copied().unwrap_or(f64::NAN))?;
        writeln!(out, "tau_max = {:.17e}", self.taus.last().copied().unwrap_or(f64::NAN))?;
        writeln!(out, "n_points = {}", self.taus.len())?;
        writeln!(out, "fitted_rate = {:.17e}", self.fit.rate)?;
        writeln!(out, "target_rate = {:.17e}", self.target_rate)?;
        writeln!(out, "relative_error = {:.17e}", self.relative_error())?;
        writeln!(out, "prefactor_exponent = {:.17e}", self.fit.alpha)?;
        for &t in windows {
            writeln!(out, "window T = {t}: {}", self.window_class(t))?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "tau,log_energy")?;
        for (t, y) in self.taus.iter().zip(&self.log_energy) {
            writeln!(out, "{t:.16e},{y:.16e}")?;
        }
        Ok(())
    }
}

/// `tau` values with `tau sqrt(rho/mu) (R1 - R_D)` spread over `[lo, hi]`.
pub fn rate_check_taus(params: &ElasticParams, r1: f64, r_d: f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let unit = params.slowness() * (r1 - r_d);
    linspace(lo / unit, hi / unit, n)
}

pub fn rate_check(
    params: &ElasticParams,
    src: &ShellElasticSource,
    geom: &TouchingBallGeom,
    taus: &[f64],
) -> Result<RateCheck, ThermoError> {
    params.validate()?;
    let log_energy = taus
        .par_iter()
        .map(|&t| log_displacement_energy(t, src, geom, params))
        .collect::<Result<Vec<_>, _>>()?;
    let fit = exponent_fit(taus, &log_energy, true)?;
    Ok(RateCheck {
        taus: taus.to_vec(),
        log_energy,
        fit,
        target_rate: -2.0 * params.slowness() * (src.shell.r1 - geom.r_d),
    })
}
