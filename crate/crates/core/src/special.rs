//! Error functions and Gaussian interval masses.
//!
//! `erf` and `erfc` come from `libm`. The scaled complement `erfcx` and the
//! interval masses below are what the rest of the crate actually uses: cubes
//! sitting at distance 64 from the origin carry Gaussian mass around
//! `exp(-4096)`, so every measure has a log-space or shifted form.

use std::f64::consts::PI;

use crate::quadrature::GaussLegendre;

/// 1/sqrt(pi).
pub const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `exp(x^2) erfc(x)`.
///
/// For `x >= 5` the Laplace continued fraction is evaluated backwards with a
/// fixed depth; below that the product form is exact to a few ulps.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x < 5.0 {
        if x < -26.0 {
            return f64::INFINITY;
        }
        return (x * x).exp() * erfc(x);
    }
    let mut t = x;
    for n in (1..=80).rev() {
        t = x + 0.5 * n as f64 / t;
    }
    FRAC_1_SQRT_PI / t
}

/// `exp(shift) * gamma_1([a, b])` where `gamma_1` is the one-dimensional
/// Gaussian measure with density `exp(-t^2)/sqrt(pi)`.
///
/// Infinite endpoints are allowed. Far tails are evaluated through `erfcx`
/// so that the shift can absorb the `exp(-a^2)` scale without underflow.
pub fn gauss_interval_scaled(a: f64, b: f64, shift: f64) -> f64 {
    if !(a < b) {
        return 0.0;
    }
    if a >= 0.0 || b <= 0.0 {
        // one-sided tail: fold onto the positive axis
        let (lo, hi) = if a >= 0.0 { (a, b) } else { (-b, -a) };
        if hi.is_finite() && hi * hi - lo * lo < 0.05 {
            return narrow_interval(lo, hi, shift);
        }
        let head = (shift - lo * lo).exp() * erfcx(lo);
        let tail = if hi.is_finite() {
            (shift - hi * hi).exp() * erfcx(hi)
        } else {
            0.0
        };
        return 0.5 * (head - tail);
    }
    shift.exp() * 0.5 * (erf(b) + erf(-a))
}

/// Gaussian mass of `[a, b]` in one dimension.
pub fn gauss_interval(a: f64, b: f64) -> f64 {
    gauss_interval_scaled(a, b, 0.0)
}

/// Natural log of the one-dimensional Gaussian mass of `[a, b]`.
pub fn log_gauss_interval(a: f64, b: f64) -> f64 {
    if !(a < b) {
        return f64::NEG_INFINITY;
    }
    let m = nearest_square(a, b);
    -m + gauss_interval_scaled(a, b, m).ln()
}

/// Log of the Gaussian measure of the axis-aligned box `[lo, hi]`.
pub fn log_gauss_box(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter()
        .zip(hi)
        .map(|(&a, &b)| log_gauss_interval(a, b))
        .sum()
}

/// Gaussian measure of the axis-aligned box `[lo, hi]`; may underflow to 0.
pub fn gauss_box(lo: &[f64], hi: &[f64]) -> f64 {
    log_gauss_box(lo, hi).exp()
}

/// `min_{t in [a,b]} t^2`.
pub(crate) fn nearest_square(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        a * a
    } else if b < 0.0 {
        b * b
    } else {
        0.0
    }
}

fn narrow_interval(lo: f64, hi: f64, shift: f64) -> f64 {
    let rule = GaussLegendre::twenty();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc = 0.0;
    for (t, w) in rule.nodes().iter().zip(rule.weights()) {
        let y = mid + half * t;
        acc += w * (shift - y * y).exp();
    }
    acc * half * FRAC_1_SQRT_PI
}

/// Density of the normalised Gaussian measure on R^d at `x`.
pub fn gaussian_density(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    PI.powf(-0.5 * d) * (-r2).exp()
}
