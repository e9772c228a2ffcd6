//! Modified-Helmholtz volume potentials of radial weights over balls and
//! shells, in closed form and by radial quadrature.
//!
//! All heat-side formulas use the spectral variable `s = sqrt(tau)`; the
//! kernel is `exp(-s|x - y|) / |x - y|`. Exponentially large factors are
//! always paired with a compensating `exp(-s R1)` so nothing overflows at
//! large `s`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{Point, ShellSource};
use crate::quadrature::{self, QuadratureError, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("spectral parameter must be positive and finite, got {0}")]
    Spectral(f64),
    #[error("sinh(s r) overflows: s*r = {sr} exceeds cap {cap}; use the scaled form")]
    Overflow { sr: f64, cap: f64 },
    #[error("radius must be nonnegative, got {0}")]
    NegativeRadius(f64),
    #[error("closed form valid only inside B_R1(p): |x - p| = {r} >= R1 = {r1}")]
    Domain { r: f64, r1: f64 },
    #[error("weight exponent j = {0} not supported")]
    Exponent(i32),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Largest `s * r` accepted by the unscaled [`sinhc_s`].
pub const SINH_CAP: f64 = 700.0;

/// Spectral parameter: `s = sqrt(tau)`, with `tau` kept alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParam {
    s: f64,
    tau: f64,
}

impl SpectralParam {
    pub fn from_tau(tau: f64) -> Result<Self, PotentialError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(PotentialError::Spectral(tau));
        }
        Ok(Self { s: tau.sqrt(), tau })
    }

    pub fn from_s(s: f64) -> Result<Self, PotentialError> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(PotentialError::Spectral(s));
        }
        Ok(Self { s, tau: s * s })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// `sinh(s r) / r`, extended by `s` at `r = 0`.
pub fn sinhc_s(r: f64, s: f64) -> Result<f64, PotentialError> {
    if r < 0.0 {
        return Err(PotentialError::NegativeRadius(r));
    }
    let sr = s * r;
    if sr > SINH_CAP {
        return Err(PotentialError::Overflow { sr, cap: SINH_CAP });
    }
    if sr < 1e-4 {
        let x2 = sr * sr;
        return Ok(s * (1.0 + x2 / 6.0 * (1.0 + x2 / 20.0)));
    }
    Ok(sr.sinh() / r)
}

/// `exp(-s shift) sinh(s r) / r` for `0 <= r`, finite for any `s` when `r <= shift`.
pub fn scaled_sinhc(r: f64, s: f64, shift: f64) -> f64 {
    if r == 0.0 {
        return s * (-s * shift).exp();
    }
    // exp(-s shift) sinh(s r) = -exp(-s (shift - r)) expm1(-2 s r) / 2
    -(-s * (shift - r)).exp() * (-2.0 * s * r).exp_m1() / (2.0 * r)
}

/// `exp(-s shift) d/dr [sinh(s r) / r] = exp(-s shift) (s r cosh(s r) - sinh(s r)) / r^2`.
pub fn scaled_sinhc_deriv(r: f64, s: f64, shift: f64) -> f64 {
    let sr = s * r;
    let scale = (-s * shift).exp();
    if r == 0.0 {
        return 0.0;
    }
    if sr < 0.5 {
        // s r cosh - sinh = sum_{k>=1} 2k x^{2k+1} / (2k+1)!
        let x2 = sr * sr;
        let mut term = sr * x2 / 3.0; // k = 1: 2 x^3 / 3! = x^3 / 3
        let mut sum = term;
        let mut k = 1.0;
        while term.abs() > 1e-18 * sum.abs() {
            // ratio of consecutive terms: (k+1)/k * x^2 / ((2k+2)(2k+3))
            term *= (k + 1.0) / k * x2 / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
            sum += term;
            k += 1.0;
        }
        return scale * sum * s * s / (sr * sr);
    }
    let ep = (-s * (shift - r)).exp();
    let em = (-s * (shift + r)).exp();
    (sr * (ep + em) - (ep - em)) / (2.0 * r * r)
}

/// `e^{-s shift} d^2/dr^2 [sinh(s r)/r]`, from the radial equation
/// `g'' + 2 g'/r = s^2 g`.
pub fn scaled_sinhc_deriv2(r: f64, s: f64, shift: f64) -> f64 {
    if s * r < 1e-3 {
        // g = s (1 + x^2/6 + x^4/120), x = s r
        let x = s * r;
        return (-s * shift).exp() * s * s * s * (1.0 / 3.0 + x * x / 10.0);
    }
    s * s * scaled_sinhc(r, s, shift) - 2.0 * scaled_sinhc_deriv(r, s, shift) / r
}

fn radial_moment_tolerance() -> Tolerance {
    Tolerance { abs: 1e-300, rel: 1e-13, max_intervals: 4000 }
}

/// `v_j(x) = int_{|y| < eta} exp(-s|x-y|)/|x-y| |y|^j dy` at `|x| = r < eta`,
/// by adaptive quadrature of the angle-integrated radial form.
pub fn vj_quadrature(j: i32, eta: f64, s: f64, r: f64) -> Result<f64, PotentialError> {
    if j < -1 {
        return Err(PotentialError::Exponent(j));
    }
    if !(s > 0.0) {
        return Err(PotentialError::Spectral(s));
    }
    if r < 0.0 {
        return Err(PotentialError::NegativeRadius(r));
    }
    let pow = j + 1;
    let tol = radial_moment_tolerance();
    if r == 0.0 {
        let est = quadrature::integrate(|rho: f64| (-s * rho).exp() * rho.powi(pow), 0.0, eta, tol)?;
        return Ok(4.0 * PI * est.value);
    }
    // (2 pi / (r s)) int_0^eta (e^{-s|r-rho|} - e^{-s(r+rho)}) rho^{j+1} d rho
    let integrand = |rho: f64| {
        let m = rho.min(r);
        (-s * (rho + r)).exp() * (2.0 * s * m).exp_m1() * rho.powi(pow)
    };
    let breaks: Vec<f64> = if r < eta { vec![0.0, r, eta] } else { vec![0.0, eta] };
    let est = quadrature::integrate_with_breaks(integrand, &breaks, tol)?;
    Ok(2.0 * PI / (r * s) * est.value)
}

/// One step of the recurrence `v_{j-2} -> v_j` at `|x| = r`.
pub fn vj_recurrence(j: i32, eta: f64, s: f64, r: f64, v_jm2: f64) -> f64 {
    let jf = j as f64;
    let s2 = s * s;
    // r^{j+1}/r = r^j, with r^0 = 1 at the origin
    let rj = if j == 0 { 1.0 } else { r.powi(j) };
    let tail = (eta + (jf + 1.0) / s) * eta.powi(j) * scaled_sinhc(r, s, eta);
    jf * (jf + 1.0) / s2 * v_jm2 + 4.0 * PI / s2 * (rj - tail)
}

/// `v_j` for `j >= 1` by chaining the recurrence from a quadrature seed
/// (`v_{-1}` for odd `j`, `v_0` for even `j`).
pub fn vj_chain(j: i32, eta: f64, s: f64, r: f64) -> Result<f64, PotentialError> {
    if j < 1 {
        return vj_quadrature(j, eta, s, r);
    }
    let start = if j % 2 == 1 { -1 } else { 0 };
    let mut v = vj_quadrature(start, eta, s, r)?;
    let mut k = start + 2;
    while k <= j {
        v = vj_recurrence(k, eta, s, r, v);
        k += 2;
    }
    Ok(v)
}

/// Shell-difference coefficient `c_j`, `j in 0..=4`:
/// `(1/4pi)(v_j over B_R2 - v_j over B_R1)(x) = c_j exp(-s R1) sinh(s|x-p|)/|x-p|`
/// for `|x - p| < R1`. Kept exact, including the `exp(-s (R2 - R1))` terms.
pub fn shell_diff(j: usize, s: f64, r1: f64, r2: f64) -> f64 {
    let e = (-s * (r2 - r1)).exp();
    let s2 = s * s;
    let c0 = || ((r1 + 1.0 / s) - (r2 + 1.0 / s) * e) / s2;
    let c1 = || {
        let q = |r: f64| r * r + 2.0 * r / s + 2.0 / s2;
        (q(r1) - q(r2) * e) / s2
    };
    let c2 = || {
        let q = |r: f64| r.powi(3) + 3.0 * r * r / s + 6.0 * r / s2 + 6.0 / (s2 * s);
        (q(r1) - q(r2) * e) / s2
    };
    match j {
        0 => c0(),
        1 => c1(),
        2 => c2(),
        3 => (12.0 * c1() + (r1 + 4.0 / s) * r1.powi(3) - (r2 + 4.0 / s) * r2.powi(3) * e) / s2,
        4 => (20.0 * c2() + (r1 + 5.0 / s) * r1.powi(4) - (r2 + 5.0 / s) * r2.powi(4) * e) / s2,
        _ => panic!("shell_diff defined for j in 0..=4, got {j}"),
    }
}

/// Table of `c_0 .. c_4` at one `(s, R1, R2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellDiffTable {
    pub s: f64,
    pub r1: f64,
    pub r2: f64,
    pub c: [f64; 5],
}

impl ShellDiffTable {
    pub fn new(s: f64, r1: f64, r2: f64) -> Self {
        let mut c = [0.0; 5];
        for (j, cj) in c.iter_mut().enumerate() {
            *cj = shell_diff(j, s, r1, r2);
        }
        Self { s, r1, r2, c }
    }

    /// `H(s; R1, R2)` of the profile `w00 = H e^{-s R1} sinh(s r)/r`.
    pub fn h_coeff(&self) -> f64 {
        let (r1, r2, c) = (self.r1, self.r2, &self.c);
        r1 * r2 * c[0] - (r1 + r2) * c[1] + c[2]
    }

    /// `M(s; R1, R2)`: the same profile coefficient for the weight
    /// `(R1 - r)^2 (R2 - r)^2`.
    pub fn m_coeff(&self) -> f64 {
        let (r1, r2, c) = (self.r1, self.r2, &self.c);
        let sum = r1 + r2;
        let prod = r1 * r2;
        prod * prod * c[0] - 2.0 * prod * sum * c[1] + (sum * sum + 2.0 * prod) * c[2] - 2.0 * sum * c[3] + c[4]
    }
}

pub fn h_coeff(s: f64, r1: f64, r2: f64) -> f64 {
    ShellDiffTable::new(s, r1, r2).h_coeff()
}

pub fn m_coeff(s: f64, r1: f64, r2: f64) -> f64 {
    ShellDiffTable::new(s, r1, r2).m_coeff()
}

/// Coefficients of `s^-2`, `s^-3`, `s^-4` in the large-`s` expansion of `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn coefficient_abc(r1: f64, r2: f64) -> ProfileCoeffs {
    let sum = r1 + r2;
    let a = r1.powi(3) * (r2 * r2 - 2.0 * r2 * sum + sum * sum + 2.0 * r1 * r2 - 2.0 * sum * r1 + r1 * r1);
    let b = r1 * r1
        * (r2 * r2 - 4.0 * r2 * sum + 3.0 * sum * sum + 6.0 * r1 * r2 - 8.0 * sum * r1 + 5.0 * r1 * r1);
    let c = -4.0 * r1 * r2 * sum + 6.0 * r1 * (sum * sum + 2.0 * r1 * r2) - 24.0 * sum * r1 * r1
        + 20.0 * r1.powi(3);
    ProfileCoeffs { a, b, c }
}

/// The free-space profile `w00(x; s)` of the shell datum inside `B_R1(p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W00 {
    pub shell: ShellSource,
    pub s: f64,
    /// `H(s; R1, R2)`.
    pub h: f64,
}

impl W00 {
    pub fn new(shell: ShellSource, s: SpectralParam) -> Self {
        let s = s.s();
        Self { shell, s, h: h_coeff(s, shell.r1, shell.r2) }
    }

    fn check(&self, r: f64) -> Result<(), PotentialError> {
        if r >= self.shell.r1 {
            return Err(PotentialError::Domain { r, r1: self.shell.r1 });
        }
        Ok(())
    }

    /// Value as a function of `r = |x - p|`.
    pub fn radial_value(&self, r: f64) -> Result<f64, PotentialError> {
        self.check(r)?;
        Ok(self.h * scaled_sinhc(r, self.s, self.shell.r1))
    }

    /// `d w00 / dr`.
    pub fn radial_deriv(&self, r: f64) -> Result<f64, PotentialError> {
        self.check(r)?;
        Ok(self.h * scaled_sinhc_deriv(r, self.s, self.shell.r1))
    }

    pub fn value(&self, x: Point) -> Result<f64, PotentialError> {
        self.radial_value(x.dist(self.shell.p))
    }

    pub fn gradient(&self, x: Point) -> Result<Point, PotentialError> {
        let d = x - self.shell.p;
        let r = d.norm();
        let g = self.radial_deriv(r)?;
        if r == 0.0 {
            return Ok(Point::ORIGIN);
        }
        Ok(d * (g / r))
    }
}

/// `w00(x; s)` for `|x - p| < R1`.
pub fn w00_closed(x: Point, shell: &ShellSource, s: SpectralParam) -> Result<f64, PotentialError> {
    W00::new(*shell, s).value(x)
}
