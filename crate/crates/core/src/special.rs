//! Error-function family with overflow-safe scaled and log forms.

use std::f64::consts::PI;

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `exp(x^2)` with the rounding error of `x^2` folded back in.
fn exp_sq(x: f64) -> f64 {
    let hi = x * x;
    let lo = x.mul_add(x, -hi);
    hi.exp() * (1.0 + lo)
}

/// Continued fraction for `erfcx`, accurate for large positive arguments.
fn erfcx_cf(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=60).rev() {
        t = x + 0.5 * k as f64 / t;
    }
    FRAC_1_SQRT_PI / t
}

/// Scaled complementary error function `exp(x^2) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        2.0 * exp_sq(x) - erfcx(-x)
    } else if x < 10.0 {
        exp_sq(x) * erfc(x)
    } else {
        erfcx_cf(x)
    }
}

/// `ln erfc(x)`, finite for all finite `x`.
pub fn log_erfc(x: f64) -> f64 {
    if x < 1.0 {
        erfc(x).ln()
    } else {
        erfcx(x).ln() - x * x
    }
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln sum_i w_i e^{l_i}` for positive weights given as `ln w_i + l_i` terms.
pub fn log_sum_exp(terms: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.into_iter().collect();
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi.is_infinite() {
        return hi;
    }
    hi + v.iter().map(|l| (l - hi).exp()).sum::<f64>().ln()
}

pub fn sqrt_2pi() -> f64 {
    (2.0 * PI).sqrt()
}
