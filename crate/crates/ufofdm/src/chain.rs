//! Transmit and receive chain: QPSK symbols onto carriers, IFFT modulation,
//! side-lobe filtering, zero padding, a multipath channel with additive
//! noise, and the 2M-point zero-forcing receiver.
//!
//! Block layout: M IFFT samples become M+N-1 filtered samples plus D padding
//! zeros. An L-tap channel with L-1 <= D smears entirely into the padding,
//! so each block equalizes on its own.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fir::FirFilter;
use crate::numerics::{dft, idft};

/// Below this |F H| at a used bin, zero forcing is treated as undefined.
pub const SPECTRAL_NULL_FLOOR: f64 = 1e-12;

/// One block of unit-energy symbols, ordered like the carrier list.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub symbols: Vec<Complex64>,
}

/// Gray map: first bit picks the real sign, second the imaginary sign,
/// bit 0 meaning +. 00 lands on (1+j)/sqrt(2); every symbol has |A| = 1.
pub fn qpsk_modulate(bits: &[u8]) -> Result<SymbolFrame> {
    if bits.len() % 2 != 0 {
        return Err(Error::Parameter(format!(
            "bit count {} is odd, QPSK consumes pairs",
            bits.len()
        )));
    }
    if bits.iter().any(|b| *b > 1) {
        return Err(Error::Parameter("bits must be 0 or 1".into()));
    }
    let symbols = bits
        .chunks_exact(2)
        .map(|pair| {
            Complex64::new(
                if pair[0] == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
                if pair[1] == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
            )
        })
        .collect();
    Ok(SymbolFrame { symbols })
}

/// Per-symbol sign decisions; parts that are exactly zero decode as bit 0.
pub fn qpsk_demodulate(frame: &SymbolFrame) -> Vec<u8> {
    let mut bits = Vec::with_capacity(frame.symbols.len() * 2);
    for s in &frame.symbols {
        bits.push(u8::from(s.re < 0.0));
        bits.push(u8::from(s.im < 0.0));
    }
    bits
}

/// x_n = sum_k (A_k / sqrt(M)) exp(2 pi j k n / M) for n = 0..M-1.
pub fn ofdm_modulate(frame: &SymbolFrame, carriers: &[usize], m: usize) -> Result<Vec<Complex64>> {
    if frame.symbols.len() != carriers.len() {
        return Err(Error::Parameter(format!(
            "{} symbols for {} carriers",
            frame.symbols.len(),
            carriers.len()
        )));
    }
    let mut bins = vec![Complex64::ZERO; m];
    for (a, k) in frame.symbols.iter().zip(carriers) {
        if *k >= m {
            return Err(Error::Parameter(format!(
                "carrier {k} outside the size-{m} transform"
            )));
        }
        bins[*k] += a;
    }
    let mut x = idft(&bins, m)?;
    let root_m = (m as f64).sqrt();
    for v in &mut x {
        *v *= root_m;
    }
    Ok(x)
}

/// Full linear convolution, length x.len() + taps.len() - 1.
pub fn convolve(x: &[Complex64], taps: &[Complex64]) -> Vec<Complex64> {
    if x.is_empty() || taps.is_empty() {
        return Vec::new();
    }
    let mut y = vec![Complex64::ZERO; x.len() + taps.len() - 1];
    for (n, xv) in x.iter().enumerate() {
        for (l, tv) in taps.iter().enumerate() {
            y[n + l] += tv * xv;
        }
    }
    y
}

/// Convolution with a real filter.
pub fn apply_filter(x: &[Complex64], filter: &FirFilter) -> Vec<Complex64> {
    let taps: Vec<Complex64> = filter
        .coefficients()
        .iter()
        .map(|f| Complex64::new(*f, 0.0))
        .collect();
    convolve(x, &taps)
}

/// Appends d zeros.
pub fn zero_pad_tx(y: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut out = y.to_vec();
    out.resize(y.len() + d, Complex64::ZERO);
    out
}

/// Static chain parameters plus the filter responses the receiver divides by.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    ifft_size: usize,
    zero_pad: usize,
    carriers: Vec<usize>,
    filter: FirFilter,
    /// Baseband taps modulated up to the carrier midpoint.
    taps_shifted: Vec<Complex64>,
    /// Modulated-filter response at 2 pi k / M for each used carrier.
    f_at_carriers: Vec<Complex64>,
}

impl ChainConfig {
    pub fn new(
        ifft_size: usize,
        zero_pad: usize,
        carriers: Vec<usize>,
        filter: FirFilter,
    ) -> Result<Self> {
        if !ifft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "block size {ifft_size} is not a power of two"
            )));
        }
        if carriers.is_empty() {
            return Err(Error::Config("no carriers".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for k in &carriers {
            if *k >= ifft_size {
                return Err(Error::Config(format!(
                    "carrier {k} outside the size-{ifft_size} transform"
                )));
            }
            if !seen.insert(*k) {
                return Err(Error::Config(format!("carrier {k} listed twice")));
            }
        }
        let block = ifft_size + filter.len() + zero_pad - 1;
        if block > 2 * ifft_size {
            return Err(Error::Config(format!(
                "block of {block} samples does not fit the 2M = {} receiver window",
                2 * ifft_size
            )));
        }
        let lo = *carriers.iter().min().unwrap() as f64;
        let hi = *carriers.iter().max().unwrap() as f64;
        let mid = 0.5 * (lo + hi);
        let taps_shifted: Vec<Complex64> = filter
            .coefficients()
            .iter()
            .enumerate()
            .map(|(n, f)| f * Complex64::from_polar(1.0, TAU * mid * n as f64 / ifft_size as f64))
            .collect();
        let f_at_carriers = carriers
            .iter()
            .map(|k| response_at(&taps_shifted, TAU * *k as f64 / ifft_size as f64))
            .collect();
        Ok(ChainConfig {
            ifft_size,
            zero_pad,
            carriers,
            filter,
            taps_shifted,
            f_at_carriers,
        })
    }

    pub fn ifft_size(&self) -> usize {
        self.ifft_size
    }

    pub fn zero_pad(&self) -> usize {
        self.zero_pad
    }

    pub fn carriers(&self) -> &[usize] {
        &self.carriers
    }

    pub fn filter(&self) -> &FirFilter {
        &self.filter
    }

    pub fn taps_shifted(&self) -> &[Complex64] {
        &self.taps_shifted
    }

    /// Modulated-filter response at bin k of the size-M transform.
    pub fn carrier_response(&self, position: usize) -> Complex64 {
        self.f_at_carriers[position]
    }

    pub fn bits_per_frame(&self) -> usize {
        2 * self.carriers.len()
    }

    /// Transmitted block length M + N + D - 1.
    pub fn block_len(&self) -> usize {
        self.ifft_size + self.filter.len() + self.zero_pad - 1
    }
}

fn response_at(taps: &[Complex64], omega: f64) -> Complex64 {
    taps.iter()
        .enumerate()
        .map(|(n, t)| t * Complex64::from_polar(1.0, -omega * n as f64))
        .sum()
}

/// Modulate, filter with the midpoint-shifted taps, append the padding.
pub fn transmit(cfg: &ChainConfig, frame: &SymbolFrame) -> Result<Vec<Complex64>> {
    let x = ofdm_modulate(frame, &cfg.carriers, cfg.ifft_size)?;
    let y = convolve(&x, &cfg.taps_shifted);
    Ok(zero_pad_tx(&y, cfg.zero_pad))
}

/// Multipath taps plus the per-sample noise level at the receiver input.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Vec<Complex64>,
    pub sigma_n: f64,
}

impl ChannelRealization {
    pub fn new(h: Vec<Complex64>, sigma_n: f64) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::Parameter("channel must have at least one tap".into()));
        }
        if h.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Parameter("channel taps must be finite".into()));
        }
        if h.iter().all(|v| *v == Complex64::ZERO) {
            return Err(Error::Parameter("channel taps are all zero".into()));
        }
        if !sigma_n.is_finite() || sigma_n < 0.0 {
            return Err(Error::Parameter(format!(
                "noise level must be finite and nonnegative, got {sigma_n}"
            )));
        }
        Ok(ChannelRealization { h, sigma_n })
    }

    /// Transparent single-tap channel.
    pub fn flat(sigma_n: f64) -> Self {
        ChannelRealization {
            h: vec![Complex64::new(1.0, 0.0)],
            sigma_n,
        }
    }

    /// H(omega) = sum_l h_l exp(-j omega l).
    pub fn response(&self, omega: f64) -> Complex64 {
        response_at(&self.h, omega)
    }
}

/// L i.i.d. circular complex Gaussian taps of variance 1/L each, so the
/// expected total channel power is 1.
pub fn draw_channel<R: Rng + ?Sized>(
    taps: usize,
    sigma_n: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if taps == 0 {
        return Err(Error::Parameter("channel needs at least one tap".into()));
    }
    let scale = (0.5 / taps as f64).sqrt();
    let h = (0..taps)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    ChannelRealization::new(h, sigma_n)
}

/// r_n = sum_l h_l y_{n-l} + v_n over the block, v_n circular complex
/// Gaussian with variance sigma_n^2. The convolution tail past the block is
/// identically zero because the last D inputs are zero and L-1 <= D.
pub fn channel_apply<R: Rng + ?Sized>(
    tx: &[Complex64],
    ch: &ChannelRealization,
    zero_pad: usize,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if ch.h.len() > zero_pad + 1 {
        return Err(Error::Config(format!(
            "channel spread {} exceeds the zero padding {zero_pad}",
            ch.h.len() - 1
        )));
    }
    let mut r = vec![Complex64::ZERO; tx.len()];
    for (l, hl) in ch.h.iter().enumerate() {
        for n in l..tx.len() {
            r[n] += hl * tx[n - l];
        }
    }
    if ch.sigma_n > 0.0 {
        let s = ch.sigma_n * FRAC_1_SQRT_2;
        for v in &mut r {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * s, im * s);
        }
    }
    Ok(r)
}

/// Zero-pads the block to 2M, transforms, reads the even bins 2k to get
/// R(2 pi k / M), and divides out sqrt(M) F H per carrier.
pub fn receive_equalize(
    r: &[Complex64],
    cfg: &ChainConfig,
    ch: &ChannelRealization,
) -> Result<SymbolFrame> {
    if r.len() != cfg.block_len() {
        return Err(Error::Parameter(format!(
            "received {} samples, expected the {}-sample block",
            r.len(),
            cfg.block_len()
        )));
    }
    let m = cfg.ifft_size;
    let bins = dft(r, 2 * m)?;
    let root_m = (m as f64).sqrt();
    let mut symbols = Vec::with_capacity(cfg.carriers.len());
    for (k, fk) in cfg.carriers.iter().zip(&cfg.f_at_carriers) {
        let hk = ch.response(TAU * *k as f64 / m as f64);
        let fh = fk * hk;
        let magnitude = fh.norm();
        if magnitude < SPECTRAL_NULL_FLOOR {
            return Err(Error::SpectralNull {
                carrier: *k,
                magnitude,
            });
        }
        symbols.push(bins[2 * k] / (root_m * fh));
    }
    Ok(SymbolFrame { symbols })
}
