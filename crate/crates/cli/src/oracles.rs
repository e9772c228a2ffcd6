//! Seeded self-checks of the closed forms against radial quadratures.

use std::f64::consts::PI;
use std::io::{self, Write};

use enclab_core::potentials::{coefficient_abc, vj_chain, SpectralParam, W00};
use enclab_core::quadrature::{integrate_with_breaks, Tolerance};
use enclab_core::shellflux::{shell_datum, shell_heat_value};
use enclab_core::{Point, ShellSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// First case that errored outright, if any.
    pub failure: Option<String>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.max_error <= self.tolerance
    }
}

fn tol() -> Tolerance {
    Tolerance { abs: 1e-300, rel: 1e-12, max_intervals: 4000 }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn run(name: &'static str, cases: usize, tolerance: f64, mut case: impl FnMut() -> Result<f64, String>) -> OracleReport {
    let mut max_error: f64 = 0.0;
    let mut failure = None;
    for _ in 0..cases {
        match case() {
            Ok(e) => max_error = max_error.max(if e.is_nan() { f64::INFINITY } else { e }),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    OracleReport { name, cases, max_error, tolerance, failure }
}

/// Recurrence-chained ball potentials against direct radial quadrature.
pub fn recurrence(rng: &mut ChaCha8Rng, cases: usize) -> OracleReport {
    run("ball potential recurrence", cases, 1e-8, || {
        let j = rng.gen_range(1..=6);
        let eta = rng.gen_range(0.5..3.0);
        let s = rng.gen_range(1.0..50.0);
        let r = eta * rng.gen_range(0.1..0.99);
        let chained = vj_chain(j, eta, s, r).map_err(|e| e.to_string())?;
        let f = |rho: f64| {
            let shell = -(-s * (r - rho).abs()).exp() * (-2.0 * s * r.min(rho)).exp_m1();
            rho.powi(j) * 2.0 * PI * rho / (s * r) * shell
        };
        let direct = integrate_with_breaks(f, &[0.0, r, eta], tol()).map_err(|e| e.to_string())?.value;
        Ok(rel(chained, direct))
    })
}

fn random_shell(rng: &mut ChaCha8Rng) -> ShellSource {
    let r1 = rng.gen_range(0.5..2.0);
    let p = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    ShellSource::new(p, r1, r1 + rng.gen_range(0.2..1.0)).expect("ordered radii")
}

fn random_dir(rng: &mut ChaCha8Rng) -> Point {
    Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalized()
}

/// Closed-form Laplace-domain shell profile against the radial volume potential.
pub fn profile(rng: &mut ChaCha8Rng, cases: usize) -> OracleReport {
    run("shell profile closed form", cases, 1e-6, || {
        let shell = random_shell(rng);
        let s = rng.gen_range(0.5..30.0);
        let r = rng.gen_range(0.02..0.98) * shell.r1;
        let x = shell.p + random_dir(rng) * r;
        let sp = SpectralParam::from_s(s).map_err(|e| e.to_string())?;
        let closed = W00::new(shell, sp).value(x).map_err(|e| e.to_string())?;
        let f = |rho: f64| shell_datum(rho, &shell) * rho / (2.0 * s * r) * (-(-s * (rho - r)).exp() * (-2.0 * s * r).exp_m1());
        let direct = integrate_with_breaks(f, &[shell.r1, shell.r2], tol()).map_err(|e| e.to_string())?.value;
        Ok(rel(closed, direct))
    })
}

/// Vanishing leading coefficients of the quartic-weight profile and its
/// limiting constant.
pub fn coefficients(rng: &mut ChaCha8Rng, cases: usize) -> OracleReport {
    run("profile coefficient algebra", cases, 1e-12, || {
        let r1 = rng.gen_range(0.1..5.0);
        let r2 = r1 + rng.gen_range(0.05..5.0);
        let k = coefficient_abc(r1, r2);
        let scale = (r1 + r2).powi(5) * 50.0;
        let c_exact = 2.0 * r1 * (r1 - r2).powi(2);
        Ok((k.a.abs() / scale).max(k.b.abs() / scale).max((k.c - c_exact).abs() / scale))
    })
}

/// Free-space heat field of the shell datum against the radial Gaussian
/// convolution, at positions inside and outside the shell.
pub fn heat_field(rng: &mut ChaCha8Rng, cases: usize) -> OracleReport {
    run("shell heat field", cases, 1e-8, || {
        let shell = random_shell(rng);
        let t = 10f64.powf(rng.gen_range(-3.0..0.5)) * (shell.r2 - shell.r1).powi(2);
        let r = rng.gen_range(0.05..1.5) * shell.r2;
        let v = shell_heat_value(r, t, &shell).map_err(|e| e.to_string())?.value;
        let pref = 1.0 / ((4.0 * PI * t).sqrt() * r);
        let f = |rho: f64| {
            let g = (-(r - rho).powi(2) / (4.0 * t)).exp() * -(-r * rho / t).exp_m1();
            pref * rho * shell_datum(rho, &shell) * g
        };
        let mut breaks = vec![shell.r1, shell.r2];
        if r > shell.r1 && r < shell.r2 {
            breaks.insert(1, r);
        }
        let direct = integrate_with_breaks(f, &breaks, tol()).map_err(|e| e.to_string())?.value;
        // the field vanishes to roundoff far from the shell at early times
        let scale = direct.abs().max(1e-12 * (shell.r2 - shell.r1).powi(2));
        Ok((v - direct).abs() / scale)
    })
}

pub fn run_all(seed: u64, cases: usize) -> Vec<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        recurrence(&mut rng, cases),
        profile(&mut rng, cases),
        coefficients(&mut rng, cases),
        heat_field(&mut rng, cases),
    ]
}

pub fn write_report<W: Write>(reports: &[OracleReport], mut out: W) -> io::Result<()> {
    for r in reports {
        writeln!(
            out,
            "{} {}: cases = {}, max_error = {:.16e}, tolerance = {:.16e}{}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.cases,
            r.max_error,
            r.tolerance,
            r.failure.as_ref().map(|f| format!(", error: {f}")).unwrap_or_default()
        )?;
    }
    let failures = reports.iter().filter(|r| !r.passed()).count();
    writeln!(out, "failures = {failures}")
}
