//! Regularized incomplete beta function and its inverse.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Remainder of Stirling's series, `ln Gamma(x) - [(x-1/2) ln x - x + ln(2 pi)/2]`.
fn stirling_tail(x: f64) -> f64 {
    if x < 10.0 {
        return ln_gamma(x) - ((x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln());
    }
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 / 1188.0))))
}

/// `ln[x^a (1-x)^b / B(a,b)]`, arranged to avoid cancellation between the
/// large terms of `ln B(a,b)` when both shapes are big.
fn ln_prefactor(x: f64, a: f64, b: f64) -> f64 {
    if a < 10.0 || b < 10.0 {
        let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
        return a * x.ln() + b * (-x).ln_1p() - ln_beta;
    }
    let c = a + b;
    // a ln(x c / a) + b ln((1-x) c / b) written with ln_1p of the deviations
    let da = (x * c - a) / a;
    let db = ((1.0 - x) * c - b) / b;
    a * da.ln_1p() + b * db.ln_1p() + 0.5 * (a * b / c).ln() - 0.5 * (2.0 * PI).ln() - stirling_tail(a)
        - stirling_tail(b)
        + stirling_tail(c)
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..100_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_prefactor(x, a, b).exp() * beta_cf(x, a, b) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_prefactor(1.0 - x, b, a).exp() * beta_cf(1.0 - x, b, a) / b).clamp(0.0, 1.0)
    }
}

/// Tolerance of [`beta_quantile`], relative to the distance from the nearer
/// end of `[0, 1]` (so also an absolute tolerance).
pub const QUANTILE_TOL: f64 = 1e-12;

/// Bracket `[lo, hi]` around the `beta` quantile of Beta(a, b), found by
/// bisection on [`reg_inc_beta`]. Its width is at most [`QUANTILE_TOL`]
/// times `min(hi, 1 - lo)`, or one ulp when that is finer than a double.
pub fn beta_quantile_bracket(beta: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("quantile level {beta} must lie in (0, 1)")));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::invalid(format!("beta shapes ({a}, {b}) must be positive")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > QUANTILE_TOL * hi.min(1.0 - lo) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if reg_inc_beta(mid, a, b) < beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// `x` with `I_x(a, b) = beta`, see [`beta_quantile_bracket`].
pub fn beta_quantile(beta: f64, a: f64, b: f64) -> Result<f64> {
    let (lo, hi) = beta_quantile_bracket(beta, a, b)?;
    Ok(0.5 * (lo + hi))
}
