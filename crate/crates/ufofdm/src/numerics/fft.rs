//! Radix-2 transforms with the e^{-j 2 pi n m / size} forward kernel.
//!
//! Sizes must be powers of two; inputs shorter than the transform size are
//! implicitly zero padded. The inverse carries the 1/size normalization.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Forward transform: X_m = sum_n x_n exp(-2 pi j n m / size).
pub fn dft(x: &[Complex64], size: usize) -> Result<Vec<Complex64>> {
    let mut buf = prepare(x, size)?;
    transform(&mut buf, false);
    Ok(buf)
}

/// Inverse transform: x_n = (1/size) sum_m X_m exp(+2 pi j n m / size).
pub fn idft(x: &[Complex64], size: usize) -> Result<Vec<Complex64>> {
    let mut buf = prepare(x, size)?;
    transform(&mut buf, true);
    let scale = 1.0 / size as f64;
    for v in &mut buf {
        *v *= scale;
    }
    Ok(buf)
}

fn prepare(x: &[Complex64], size: usize) -> Result<Vec<Complex64>> {
    if size == 0 || !size.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "transform size {size} is not a power of two"
        )));
    }
    if x.len() > size {
        return Err(Error::Parameter(format!(
            "input length {} exceeds transform size {size}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Parameter("non-finite transform input".into()));
    }
    let mut buf = vec![Complex64::ZERO; size];
    buf[..x.len()].copy_from_slice(x);
    Ok(buf)
}

/// Iterative Cooley-Tukey with a precomputed twiddle table, so rounding does
/// not accumulate along the butterfly recurrences.
fn transform(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddle: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, sign * TAU * k as f64 / n as f64))
        .collect();
    let mut len = 2;
    while len <= n {
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = twiddle[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + len / 2] * w;
                buf[start + k] = a + b;
                buf[start + k + len / 2] = a - b;
            }
        }
        len <<= 1;
    }
}
