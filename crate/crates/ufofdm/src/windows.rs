//! Reference filters: the Dolph-Chebyshev window and the identity filter.
//!
//! The window is built by frequency sampling. T_{N-1}(beta cos(pi k/N)) is
//! the window's DFT; the inverse transform (with a half-sample phase when N
//! is even) is mirrored into a symmetric sequence and peak-normalized, so the
//! side lobes of |F(omega)| sit exactly attenuation_db below the main lobe.

use std::f64::consts::{PI, TAU};

use crate::design::{power_vector, shift_carriers, DesignSpec};
use crate::error::{Error, Result};
use crate::fir::{autocorrelation_seq, FirFilter, Provenance};

/// T_n(x) continued past [-1, 1] by the cosh branches; odd orders are odd
/// functions, so the x < -1 branch carries the order's parity sign.
fn chebyshev(order: usize, x: f64) -> f64 {
    let n = order as f64;
    if x.abs() <= 1.0 {
        (n * x.acos()).cos()
    } else {
        let sign = if x < 0.0 && order % 2 == 1 { -1.0 } else { 1.0 };
        sign * (n * x.abs().acosh()).cosh()
    }
}

/// Length-N window whose frequency-response side lobes are all exactly
/// `attenuation_db` below the main-lobe peak.
pub fn dolph_chebyshev(taps: usize, attenuation_db: f64) -> Result<FirFilter> {
    if taps < 2 {
        return Err(Error::Parameter(format!(
            "chebyshev window needs at least 2 taps, got {taps}"
        )));
    }
    if !attenuation_db.is_finite() || attenuation_db <= 0.0 {
        return Err(Error::Parameter(format!(
            "attenuation must be a positive dB value, got {attenuation_db}"
        )));
    }
    let n = taps;
    let order = n - 1;
    let ripple = 10f64.powf(attenuation_db / 20.0);
    let beta = (ripple.acosh() / order as f64).cosh();
    let p: Vec<f64> = (0..n)
        .map(|k| chebyshev(order, beta * (PI * k as f64 / n as f64).cos()))
        .collect();
    // Inverse transform of the frequency samples; only the first half is
    // needed, the rest is the mirror image.
    let mut w = if n % 2 == 1 {
        let half = (n + 1) / 2;
        let base: Vec<f64> = (0..half)
            .map(|j| {
                (0..n)
                    .map(|k| p[k] * (TAU * (k * j) as f64 / n as f64).cos())
                    .sum()
            })
            .collect();
        let mut w: Vec<f64> = base[1..].iter().rev().copied().collect();
        w.extend_from_slice(&base);
        w
    } else {
        // Half-sample phase e^{j pi k / N} centers the even-length window.
        let half = n / 2 + 1;
        let base: Vec<f64> = (0..half)
            .map(|j| {
                (0..n)
                    .map(|k| {
                        p[k] * (PI * (k as f64) * (1.0 - 2.0 * j as f64) / n as f64).cos()
                    })
                    .sum()
            })
            .collect();
        let mut w: Vec<f64> = base[1..].iter().rev().copied().collect();
        w.extend_from_slice(&base[1..]);
        w
    };
    let peak = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in &mut w {
        *v /= peak;
    }
    FirFilter::new(w, Provenance::DolphChebyshev { attenuation_db })
}

/// Single-tap pass-through; reduces the filtered chain to plain OFDM.
pub fn identity_filter() -> FirFilter {
    FirFilter::new(vec![1.0], Provenance::Identity).expect("one tap is always valid")
}

/// Rescales the filter so b_c' autocorrelation(f) = K (M + N - 1), the same
/// power-conservation equality the designed filters satisfy.
pub fn normalize_power(filter: &FirFilter, spec: &DesignSpec) -> Result<FirFilter> {
    if filter.len() != spec.taps {
        return Err(Error::Parameter(format!(
            "filter has {} taps but the design context expects {}",
            filter.len(),
            spec.taps
        )));
    }
    let carriers = shift_carriers(spec)?;
    let b = power_vector(spec, &carriers)?;
    let g = autocorrelation_seq(filter.coefficients());
    let inner: f64 = b.iter().zip(&g).map(|(bi, gi)| bi * gi).sum();
    if inner <= 0.0 {
        return Err(Error::Parameter(format!(
            "filter carries no positive power on the carriers (b'g = {inner:.3e})"
        )));
    }
    let k = spec.num_carriers() as f64;
    let target = k * (spec.ifft_size + spec.taps - 1) as f64;
    let s = (target / inner).sqrt();
    let scaled = filter.coefficients().iter().map(|v| v * s).collect();
    FirFilter::new(scaled, filter.provenance.clone())
}
