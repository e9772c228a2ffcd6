//! Adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("quadrature did not converge: estimate {value:e}, error {error:e}, requested {requested:e} after {intervals} intervals")]
pub struct QuadratureError {
    pub value: f64,
    pub error: f64,
    pub requested: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-300, rel: 1e-12, max_intervals: 2000 }
    }
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self { rel, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (and the center).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, &x) in XGK.iter().take(7).enumerate() {
        let dx = h * x;
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    Estimate { value: kronrod * h, error: ((kronrod - gauss) * h).abs() }
}

/// Integrates `f` over `[a, b]`, bisecting the worst interval until the
/// summed error estimate meets `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate, QuadratureError> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Like [`integrate`], with the initial partition given by `breaks`
/// (sorted, at least two entries). Kinks of the integrand belong there.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate, QuadratureError> {
    let mut intervals: Vec<(f64, f64, Estimate)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1], gk15(&f, w[0], w[1])))
        .collect();
    if intervals.is_empty() {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    loop {
        let value: f64 = intervals.iter().map(|iv| iv.2.value).sum();
        let error: f64 = intervals.iter().map(|iv| iv.2.error).sum();
        let requested = tol.abs.max(tol.rel * value.abs());
        if error <= requested {
            return Ok(Estimate { value, error });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .expect("nonempty");
        let (a, b, _) = intervals[worst];
        let m = 0.5 * (a + b);
        if intervals.len() >= tol.max_intervals || !(m > a && m < b) {
            // roundoff floor: accept if the error is at machine resolution
            if error <= 64.0 * f64::EPSILON * intervals.iter().map(|iv| iv.2.value.abs()).sum::<f64>() {
                return Ok(Estimate { value, error });
            }
            return Err(QuadratureError { value, error, requested, intervals: intervals.len() });
        }
        intervals[worst] = (a, m, gk15(&f, a, m));
        intervals.push((m, b, gk15(&f, m, b)));
    }
}
