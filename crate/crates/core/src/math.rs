//! Scalar helpers on top of `libm`, so results do not depend on whether `std`
//! is linked.

use core::f64::consts::PI;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `x · sigmoid(x)`.
#[inline]
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn swish_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

/// Numerically stable `log Σ exp(v)`. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| exp(v - max)).sum();
    max + ln(sum)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    sqrt(norm_sq(a))
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `log I_v(x)` for the modified Bessel function of the first kind, `v ≥ 0`, `x ≥ 0`.
///
/// Power series for `x ≤ 50`, large-argument asymptotic expansion above.
pub fn log_bessel_i(v: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if v == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x <= 50.0 {
        // I_v(x) = (x/2)^v / Γ(v+1) · Σ_j r_j,  r_j = r_{j-1} (x/2)² / (j (j+v))
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = 1.0;
        loop {
            term *= q / (j * (j + v));
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            j += 1.0;
        }
        v * ln(0.5 * x) - lgamma(v + 1.0) + ln(sum)
    } else {
        // I_v(x) ~ e^x / sqrt(2πx) · Σ_j (-1)^j a_j(v) / x^j
        let mu = 4.0 * v * v;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = 1.0;
        while j < 60.0 {
            let odd = 2.0 * j - 1.0;
            let next = -term * (mu - odd * odd) / (j * 8.0 * x);
            if abs(next) >= abs(term) {
                break;
            }
            term = next;
            sum += term;
            if abs(term) < 1e-17 * abs(sum) {
                break;
            }
            j += 1.0;
        }
        x - 0.5 * ln(2.0 * PI * x) + ln(sum)
    }
}

/// Log of the surface area of the unit sphere `S^{dim-1}` in `R^dim`.
pub fn log_sphere_area(dim: usize) -> f64 {
    let half = 0.5 * dim as f64;
    core::f64::consts::LN_2 + half * ln(PI) - lgamma(half)
}
