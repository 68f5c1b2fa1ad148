//! Maximum mean discrepancy with the inverse multiquadric kernel
//! `k(x, y) = c / (c + ‖x − y‖²)`.

use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MmdConfig {
    pub kernel_width: f64,
}

impl MmdConfig {
    pub fn new(kernel_width: f64) -> Result<Self> {
        check_width(kernel_width)?;
        Ok(Self { kernel_width })
    }
}

fn check_width(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("IMQ kernel width must be positive"))
    }
}

pub fn imq_kernel(x: &[f64], y: &[f64], c: f64) -> Result<f64> {
    check_width(c)?;
    if x.len() != y.len() {
        return Err(Error::shape("imq_kernel", x.len(), y.len()));
    }
    Ok(imq(x, y, c))
}

#[inline]
fn imq(x: &[f64], y: &[f64], c: f64) -> f64 {
    c / (c + math::dist_sq(x, y))
}

/// Order-independent accumulator for values in `[0, 2^20)`: each term is
/// rounded to a multiple of `2^-100` and summed as an integer, so any
/// permutation of the terms yields the same bits.
#[derive(Default)]
struct FixedSum(u128);

const FIXED_SCALE: f64 = 1_267_650_600_228_229_401_496_703_205_376.0; // 2^100

impl FixedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        debug_assert!((0.0..1_048_576.0).contains(&v));
        self.0 += (v * FIXED_SCALE) as u128;
    }

    fn value(&self) -> f64 {
        self.0 as f64 / FIXED_SCALE
    }
}

fn check_samples(x: &Matrix, z: &Matrix, c: f64) -> Result<()> {
    check_width(c)?;
    if x.rows() < 2 || z.rows() < 2 {
        return Err(Error::invalid("MMD needs at least two samples on each side"));
    }
    if x.cols() != z.cols() {
        return Err(Error::shape("mmd2_unbiased", x.cols(), z.cols()));
    }
    Ok(())
}

/// Unbiased (U-statistic) estimate of MMD². Can be slightly negative.
pub fn mmd2_unbiased(x: &Matrix, z: &Matrix, c: f64) -> Result<f64> {
    check_samples(x, z, c)?;
    let (n, m) = (x.rows(), z.rows());
    let mut xx = FixedSum::default();
    for i in 0..n {
        for j in (i + 1)..n {
            xx.add(imq(x.row(i), x.row(j), c));
        }
    }
    let mut zz = FixedSum::default();
    for i in 0..m {
        for j in (i + 1)..m {
            zz.add(imq(z.row(i), z.row(j), c));
        }
    }
    let mut xz = FixedSum::default();
    for i in 0..n {
        for j in 0..m {
            xz.add(imq(x.row(i), z.row(j), c));
        }
    }
    let (nf, mf) = (n as f64, m as f64);
    Ok(2.0 * xx.value() / (nf * (nf - 1.0)) + 2.0 * zz.value() / (mf * (mf - 1.0))
        - 2.0 * xz.value() / (nf * mf))
}

/// MMD² together with its gradients w.r.t. every row of `x` and `z`.
pub fn mmd2_unbiased_with_grad(x: &Matrix, z: &Matrix, c: f64) -> Result<(f64, Matrix, Matrix)> {
    let value = mmd2_unbiased(x, z, c)?;
    let (n, m, k) = (x.rows(), z.rows(), x.cols());
    let (nf, mf) = (n as f64, m as f64);
    let mut gx = Matrix::zeros(n, k);
    let mut gz = Matrix::zeros(m, k);

    // ∂k(a, b)/∂a = -2 k² (a - b) / c
    let w_xx = 2.0 / (nf * (nf - 1.0));
    for i in 0..n {
        for j in (i + 1)..n {
            let kv = imq(x.row(i), x.row(j), c);
            let f = -2.0 * kv * kv / c * w_xx;
            for d in 0..k {
                let diff = x[(i, d)] - x[(j, d)];
                gx[(i, d)] += f * diff;
                gx[(j, d)] -= f * diff;
            }
        }
    }
    let w_zz = 2.0 / (mf * (mf - 1.0));
    for i in 0..m {
        for j in (i + 1)..m {
            let kv = imq(z.row(i), z.row(j), c);
            let f = -2.0 * kv * kv / c * w_zz;
            for d in 0..k {
                let diff = z[(i, d)] - z[(j, d)];
                gz[(i, d)] += f * diff;
                gz[(j, d)] -= f * diff;
            }
        }
    }
    let w_xz = -2.0 / (nf * mf);
    for i in 0..n {
        for j in 0..m {
            let kv = imq(x.row(i), z.row(j), c);
            let f = -2.0 * kv * kv / c * w_xz;
            for d in 0..k {
                let diff = x[(i, d)] - z[(j, d)];
                gx[(i, d)] += f * diff;
                gz[(j, d)] -= f * diff;
            }
        }
    }
    Ok((value, gx, gz))
}
