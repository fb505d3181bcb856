//! Experiment drivers: analytic and measured power spectra, BER curves over
//! flat and Rayleigh channels, PAPR CCDFs, and the closed-form link
//! statistics they are checked against.
//!
//! Every Monte Carlo frame draws from its own stream (see `seeding`), and
//! aggregation is either integer counting or fixed-order summation, so all
//! results are byte-reproducible for a given master seed at any worker count.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use rand::RngCore;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::chain::{
    channel_apply, draw_channel, qpsk_demodulate, qpsk_modulate, receive_equalize, transmit,
    ChainConfig, ChannelRealization, SPECTRAL_NULL_FLOOR,
};
use crate::design::{expected_spectrum, shift_carriers, uniform_grid, DesignSpec};
use crate::error::{Error, Result};
use crate::fir::FirFilter;
use crate::numerics::{dft, idft};
use crate::seeding::{frame_rng, Experiment};

/// Power ratios below this floor are clamped before the dB conversion.
const DB_FLOOR: f64 = 1e-30;
/// Consecutive spectral-null channel redraws tolerated per frame.
const NULL_REDRAW_LIMIT: u64 = 10_000;
/// Frames per work unit; partial sums are reduced in unit order.
const CHUNK: u64 = 256;

fn to_db_normalized(values: &[f64]) -> Vec<f64> {
    let peak = values.iter().copied().fold(f64::MIN, f64::max);
    values
        .iter()
        .map(|v| 10.0 * (v / peak).max(DB_FLOOR).log10())
        .collect()
}

fn random_bits(rng: &mut impl RngCore, count: usize) -> Vec<u8> {
    (0..count).map(|_| (rng.next_u32() & 1) as u8).collect()
}

/// Power spectrum trace over omega in [0, pi], both columns normalized to a
/// 0 dB peak.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdTrace {
    pub omega_over_pi: Vec<f64>,
    pub analytic_db: Vec<f64>,
    pub empirical_db: Option<Vec<f64>>,
}

/// |F(omega)|^2 E{|X(omega)|^2} on a uniform grid, peak-normalized.
pub fn analytic_psd(filter: &FirFilter, spec: &DesignSpec, grid_points: usize) -> Result<PsdTrace> {
    if grid_points < 256 {
        return Err(Error::Parameter(format!(
            "PSD grid needs at least 256 points, got {grid_points}"
        )));
    }
    let carriers = shift_carriers(spec)?;
    let omega = uniform_grid(0.0, PI, grid_points);
    let raw: Vec<f64> = omega
        .iter()
        .map(|w| filter.power_response(*w) * expected_spectrum(spec, &carriers, *w))
        .collect();
    Ok(PsdTrace {
        omega_over_pi: omega.into_iter().map(|w| w / PI).collect(),
        analytic_db: to_db_normalized(&raw),
        empirical_db: None,
    })
}

/// Largest analytic PSD value on [stopband_start, pi], in dB relative to the
/// full-band peak.
pub fn stopband_maximum_db(
    filter: &FirFilter,
    spec: &DesignSpec,
    grid_points: usize,
) -> Result<f64> {
    let carriers = shift_carriers(spec)?;
    let psd = |w: &f64| filter.power_response(*w) * expected_spectrum(spec, &carriers, *w);
    let peak = uniform_grid(0.0, PI, grid_points)
        .iter()
        .map(psd)
        .fold(0.0f64, f64::max);
    let stop = uniform_grid(spec.stopband_start, PI, grid_points)
        .iter()
        .map(psd)
        .fold(0.0f64, f64::max);
    Ok(10.0 * (stop / peak).max(DB_FLOOR).log10())
}

/// Averaged periodogram of filtered random-QPSK frames on the fft bin grid,
/// with the analytic curve evaluated on the same bins for comparison.
pub fn empirical_psd(
    filter: &FirFilter,
    spec: &DesignSpec,
    frames: u64,
    fft_size: usize,
    master_seed: u64,
) -> Result<PsdTrace> {
    if frames == 0 {
        return Err(Error::Parameter("need at least one frame".into()));
    }
    if !fft_size.is_power_of_two() || fft_size < 4 * spec.ifft_size {
        return Err(Error::Parameter(format!(
            "fft size must be a power of two at or above 4M = {}, got {fft_size}",
            4 * spec.ifft_size
        )));
    }
    let carriers = shift_carriers(spec)?;
    let freqs = carriers.full_set();
    let m = spec.ifft_size;
    let root_m = (m as f64).sqrt();
    // The shifted carriers sit between bins, so the block is synthesized
    // directly instead of through the IFFT.
    let phase: Vec<Vec<Complex64>> = freqs
        .iter()
        .map(|wc| {
            (0..m)
                .map(|n| Complex64::from_polar(1.0, wc * n as f64))
                .collect()
        })
        .collect();
    let taps = filter.coefficients();
    let bins = fft_size / 2 + 1;
    let accumulate = |start: u64, end: u64| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; bins];
        for i in start..end {
            let mut rng = frame_rng(master_seed, Experiment::Psd, i);
            let bits = random_bits(&mut rng, 2 * freqs.len());
            let symbols = qpsk_modulate(&bits)?.symbols;
            let x: Vec<Complex64> = (0..m)
                .map(|n| {
                    symbols
                        .iter()
                        .zip(&phase)
                        .map(|(a, row)| a * row[n])
                        .sum::<Complex64>()
                        / root_m
                })
                .collect();
            let mut y = vec![Complex64::ZERO; m + taps.len() - 1];
            for (n, xv) in x.iter().enumerate() {
                for (l, t) in taps.iter().enumerate() {
                    y[n + l] += t * xv;
                }
            }
            let spectrum = dft(&y, fft_size)?;
            for (a, s) in acc.iter_mut().zip(&spectrum[..bins]) {
                *a += s.norm_sqr();
            }
        }
        Ok(acc)
    };
    let starts: Vec<u64> = (0..frames).step_by(CHUNK as usize).collect();
    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|s| accumulate(*s, (s + CHUNK).min(frames)))
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<f64>> = starts
        .iter()
        .map(|s| accumulate(*s, (s + CHUNK).min(frames)))
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; bins];
    for part in partials {
        for (t, p) in total.iter_mut().zip(&part) {
            *t += p;
        }
    }
    let analytic: Vec<f64> = (0..bins)
        .map(|i| {
            let w = TAU * i as f64 / fft_size as f64;
            filter.power_response(w) * expected_spectrum(spec, &carriers, w)
        })
        .collect();
    Ok(PsdTrace {
        omega_over_pi: (0..bins)
            .map(|i| 2.0 * i as f64 / fft_size as f64)
            .collect(),
        analytic_db: to_db_normalized(&analytic),
        empirical_db: Some(to_db_normalized(&total)),
    })
}

/// Per-carrier amplitude SNR sqrt(M/(M+N+D-1)) |F H| / sigma_n after zero
/// forcing.
pub fn snr_theoretical(cfg: &ChainConfig, ch: &ChannelRealization) -> Result<Vec<f64>> {
    if ch.sigma_n <= 0.0 {
        return Err(Error::Parameter(
            "SNR is undefined without noise; sigma_n must be positive".into(),
        ));
    }
    let m = cfg.ifft_size() as f64;
    let prefactor = (m / cfg.block_len() as f64).sqrt();
    Ok(cfg
        .carriers()
        .iter()
        .enumerate()
        .map(|(pos, k)| {
            let h = ch.response(TAU * *k as f64 / m);
            prefactor * (cfg.carrier_response(pos) * h).norm() / ch.sigma_n
        })
        .collect())
}

/// sigma~ = sqrt((1/K) sum_k |F(2 pi k / M)|^2) over the used carriers.
pub fn sigma_tilde(cfg: &ChainConfig) -> f64 {
    let k = cfg.carriers().len();
    let sum: f64 = (0..k).map(|pos| cfg.carrier_response(pos).norm_sqr()).sum();
    (sum / k as f64).sqrt()
}

/// Channel ensemble for a BER run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    /// Fixed h = [1]; only the additive noise varies.
    AwgnFlat,
    /// Independent L-tap realization per frame.
    Rayleigh { taps: usize },
}

/// How the SNR grid values map to the noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrScale {
    /// Grid values are sigma_s^2/sigma_n^2 in dB (unit symbol energy).
    SymbolToNoise,
    /// Grid values are Eb/N0 in dB; Eb = 1/2 per QPSK bit, N0 = sigma_n^2.
    EbN0,
}

impl SnrScale {
    /// Noise variance per complex sample for one grid value.
    pub fn noise_variance(self, grid_db: f64) -> f64 {
        match self {
            SnrScale::SymbolToNoise => 10f64.powf(-grid_db / 10.0),
            SnrScale::EbN0 => 0.5 * 10f64.powf(-grid_db / 10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    /// sigma_s^2/sigma_n^2 in dB.
    pub snr_db: f64,
    /// Eb/N0 in dB for the same noise level.
    pub eb_n0_db: f64,
    pub sigma_n: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    /// 95% Wilson interval.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Channels discarded for spectral nulls before this point completed.
    pub channel_redraws: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub points: Vec<BerPoint>,
    pub channel: ChannelModel,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerOptions {
    pub snr_grid_db: Vec<f64>,
    pub scale: SnrScale,
    pub bits_per_point: u64,
    pub master_seed: u64,
}

fn wilson_interval(errors: u64, bits: u64) -> (f64, f64) {
    // 97.5th normal percentile.
    let z = 1.959963984540054f64;
    let n = bits as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn carriers_usable(cfg: &ChainConfig, ch: &ChannelRealization) -> bool {
    let m = cfg.ifft_size() as f64;
    cfg.carriers().iter().enumerate().all(|(pos, k)| {
        let h = ch.response(TAU * *k as f64 / m);
        (cfg.carrier_response(pos) * h).norm() >= SPECTRAL_NULL_FLOOR
    })
}

/// Bit errors and channel redraws for one frame.
fn ber_frame(
    cfg: &ChainConfig,
    model: ChannelModel,
    sigma_n: f64,
    master_seed: u64,
    snr_index: u32,
    frame: u64,
) -> Result<(u64, u64)> {
    let mut rng = frame_rng(master_seed, Experiment::Ber { snr_index }, frame);
    let mut redraws = 0u64;
    let ch = match model {
        ChannelModel::AwgnFlat => ChannelRealization::flat(sigma_n),
        ChannelModel::Rayleigh { taps } => loop {
            let candidate = draw_channel(taps, sigma_n, &mut rng)?;
            if carriers_usable(cfg, &candidate) {
                break candidate;
            }
            redraws += 1;
            if redraws >= NULL_REDRAW_LIMIT {
                return Err(Error::Experiment(format!(
                    "{NULL_REDRAW_LIMIT} consecutive spectral-null channels at frame {frame}"
                )));
            }
        },
    };
    let bits = random_bits(&mut rng, cfg.bits_per_frame());
    let tx = transmit(cfg, &qpsk_modulate(&bits)?)?;
    let rx = channel_apply(&tx, &ch, cfg.zero_pad(), &mut rng)?;
    let decided = qpsk_demodulate(&receive_equalize(&rx, cfg, &ch)?);
    let errors = bits
        .iter()
        .zip(&decided)
        .filter(|(a, b)| a != b)
        .count() as u64;
    Ok((errors, redraws))
}

/// Runs the full chain over every SNR grid point, counting bit errors.
/// Error counts are integers, so the curve is identical at any worker count.
pub fn run_ber_experiment(
    cfg: &ChainConfig,
    model: ChannelModel,
    opts: &BerOptions,
) -> Result<BerCurve> {
    if opts.bits_per_point < 10_000 {
        return Err(Error::Parameter(format!(
            "need at least 10^4 bits per point for a meaningful estimate, got {}",
            opts.bits_per_point
        )));
    }
    if opts.snr_grid_db.is_empty() || opts.snr_grid_db.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("SNR grid must be nonempty and finite".into()));
    }
    if let ChannelModel::Rayleigh { taps } = model {
        if taps == 0 {
            return Err(Error::Parameter("Rayleigh model needs at least one tap".into()));
        }
        if taps - 1 > cfg.zero_pad() {
            return Err(Error::Config(format!(
                "channel spread {} exceeds the zero padding {}",
                taps - 1,
                cfg.zero_pad()
            )));
        }
    }
    let bpf = cfg.bits_per_frame() as u64;
    let frames = opts.bits_per_point.div_ceil(bpf);
    let mut points = Vec::with_capacity(opts.snr_grid_db.len());
    for (idx, grid_db) in opts.snr_grid_db.iter().enumerate() {
        let sigma2 = opts.scale.noise_variance(*grid_db);
        let sigma_n = sigma2.sqrt();
        let work = |i: u64| ber_frame(cfg, model, sigma_n, opts.master_seed, idx as u32, i);
        #[cfg(feature = "parallel")]
        let (errors, redraws) = (0..frames)
            .into_par_iter()
            .map(work)
            .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
        #[cfg(not(feature = "parallel"))]
        let (errors, redraws) = {
            let mut acc = (0u64, 0u64);
            for i in 0..frames {
                let (e, r) = work(i)?;
                acc = (acc.0 + e, acc.1 + r);
            }
            acc
        };
        let bits = frames * bpf;
        let (ci_low, ci_high) = wilson_interval(errors, bits);
        points.push(BerPoint {
            // + 0.0 turns the -0.0 arising at sigma2 = 1 into plain zero
            snr_db: -10.0 * sigma2.log10() + 0.0,
            eb_n0_db: -10.0 * (2.0 * sigma2).log10() + 0.0,
            sigma_n,
            bits,
            errors,
            ber: errors as f64 / bits as f64,
            ci_low,
            ci_high,
            channel_redraws: redraws,
        });
    }
    Ok(BerCurve {
        points,
        channel: model,
        master_seed: opts.master_seed,
    })
}

/// Empirical complementary CDF of the per-frame PAPR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaprCcdf {
    pub thresholds_db: Vec<f64>,
    pub ccdf: Vec<f64>,
    pub symbols_evaluated: u64,
    /// Samples per occupied-band symbol duration, M/K.
    pub oversampling: f64,
}

impl PaprCcdf {
    /// Smallest grid threshold where the CCDF has dropped to `level`.
    pub fn threshold_at(&self, level: f64) -> Option<f64> {
        self.thresholds_db
            .iter()
            .zip(&self.ccdf)
            .find(|(_, c)| **c <= level)
            .map(|(t, _)| *t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaprOptions {
    pub symbols: u64,
    pub master_seed: u64,
    /// 1 keeps the discrete chain samples; larger values insert bandlimited
    /// interpolation before the peak search (sensitivity mode).
    pub interpolate: usize,
}

/// Bandlimited upsampling by spectrum zero padding around the Nyquist split.
fn upsample(y: &[Complex64], factor: usize) -> Result<Vec<Complex64>> {
    let base = y.len().next_power_of_two();
    let up = base * factor.next_power_of_two();
    let spectrum = dft(y, base)?;
    let half = base / 2;
    let mut padded = vec![Complex64::ZERO; up];
    padded[..half].copy_from_slice(&spectrum[..half]);
    padded[half] = 0.5 * spectrum[half];
    padded[up - half] = 0.5 * spectrum[half];
    for j in half + 1..base {
        padded[up - base + j] = spectrum[j];
    }
    let gain = (up / base) as f64;
    let mut out = idft(&padded, up)?;
    for v in &mut out {
        *v *= gain;
    }
    out.truncate(y.len() * (up / base));
    Ok(out)
}

/// Max |y_n|^2 / P_av per frame over the M+N-1 filtered samples (no padding),
/// with P_av = K/M. The identity filter gives the plain-OFDM baseline on the
/// M IFFT samples.
pub fn compute_papr_ccdf(cfg: &ChainConfig, opts: &PaprOptions) -> Result<PaprCcdf> {
    if opts.symbols == 0 {
        return Err(Error::Parameter("need at least one symbol frame".into()));
    }
    if opts.interpolate == 0 {
        return Err(Error::Parameter("interpolation factor must be positive".into()));
    }
    if opts.symbols < 1_000 {
        log::warn!(
            "PAPR CCDF over only {} frames will be noisy below 10^-2",
            opts.symbols
        );
    }
    let k = cfg.carriers().len() as f64;
    let p_av = k / cfg.ifft_size() as f64;
    let frame_papr = |i: u64| -> Result<f64> {
        let mut rng = frame_rng(opts.master_seed, Experiment::Papr, i);
        let bits = random_bits(&mut rng, cfg.bits_per_frame());
        let x = crate::chain::ofdm_modulate(
            &qpsk_modulate(&bits)?,
            cfg.carriers(),
            cfg.ifft_size(),
        )?;
        let mut y = crate::chain::convolve(&x, cfg.taps_shifted());
        if opts.interpolate > 1 {
            y = upsample(&y, opts.interpolate)?;
        }
        let peak = y.iter().map(|v| v.norm_sqr()).fold(0.0f64, f64::max);
        Ok(peak / p_av)
    };
    #[cfg(feature = "parallel")]
    let paprs: Vec<f64> = (0..opts.symbols)
        .into_par_iter()
        .map(frame_papr)
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let paprs: Vec<f64> = (0..opts.symbols)
        .map(frame_papr)
        .collect::<Result<_>>()?;
    let mut papr_db: Vec<f64> = paprs
        .into_iter()
        .map(|p| 10.0 * p.max(DB_FLOOR).log10())
        .collect();
    papr_db.sort_by(f64::total_cmp);
    let n = papr_db.len();
    let thresholds_db: Vec<f64> = (0..=280).map(|i| i as f64 * 0.05).collect();
    let ccdf = thresholds_db
        .iter()
        .map(|t| {
            let not_above = papr_db.partition_point(|p| *p <= *t);
            (n - not_above) as f64 / n as f64
        })
        .collect();
    Ok(PaprCcdf {
        thresholds_db,
        ccdf,
        symbols_evaluated: opts.symbols,
        oversampling: cfg.ifft_size() as f64 / k,
    })
}

/// Mean of |y_n|^2 / P_av over the full-overlap window n in [N-1, M-1],
/// estimated over `frames` random frames. Matches sigma_tilde^2.
pub fn interior_power_ratio(cfg: &ChainConfig, frames: u64, master_seed: u64) -> Result<f64> {
    if frames == 0 {
        return Err(Error::Parameter("need at least one frame".into()));
    }
    let m = cfg.ifft_size();
    let n = cfg.filter().len();
    let p_av = cfg.carriers().len() as f64 / m as f64;
    let window = (n - 1)..m;
    let mut total = 0.0;
    let mut count = 0u64;
    for i in 0..frames {
        let mut rng = frame_rng(master_seed, Experiment::Generic { tag: 0x1f }, i);
        let bits = random_bits(&mut rng, cfg.bits_per_frame());
        let tx = transmit(cfg, &qpsk_modulate(&bits)?)?;
        for v in &tx[window.clone()] {
            total += v.norm_sqr();
        }
        count += window.len() as u64;
    }
    Ok(total / (count as f64 * p_av))
}

pub fn write_psd_csv<W: Write>(out: &mut W, trace: &PsdTrace) -> Result<()> {
    writeln!(out, "omega_over_pi,analytic_db,empirical_db")?;
    for (i, w) in trace.omega_over_pi.iter().enumerate() {
        match &trace.empirical_db {
            Some(emp) => writeln!(out, "{},{},{}", w, trace.analytic_db[i], emp[i])?,
            None => writeln!(out, "{},{},", w, trace.analytic_db[i])?,
        }
    }
    Ok(())
}

pub fn write_ber_csv<W: Write>(out: &mut W, curve: &BerCurve) -> Result<()> {
    writeln!(out, "snr_db,eb_n0_db,bits,errors,ber,ci_low,ci_high")?;
    for p in &curve.points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.snr_db, p.eb_n0_db, p.bits, p.errors, p.ber, p.ci_low, p.ci_high
        )?;
    }
    Ok(())
}

pub fn write_ccdf_csv<W: Write>(out: &mut W, ccdf: &PaprCcdf) -> Result<()> {
    writeln!(out, "threshold_db,ccdf")?;
    for (t, c) in ccdf.thresholds_db.iter().zip(&ccdf.ccdf) {
        writeln!(out, "{t},{c}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::q_function;
    use crate::windows::{dolph_chebyshev, identity_filter, normalize_power};

    fn paper_spec() -> DesignSpec {
        DesignSpec::default()
    }

    fn chebyshev_config(zero_pad: usize) -> ChainConfig {
        let spec = paper_spec();
        let filter = normalize_power(&dolph_chebyshev(16, 45.0).unwrap(), &spec).unwrap();
        ChainConfig::new(128, zero_pad, (4..=19).collect(), filter).unwrap()
    }

    fn identity_config(zero_pad: usize) -> ChainConfig {
        ChainConfig::new(128, zero_pad, (4..=19).collect(), identity_filter()).unwrap()
    }

    #[test]
    fn identity_psd_is_the_expected_spectrum_with_carrier_peaks() {
        let spec = paper_spec();
        let trace = analytic_psd(&identity_filter(), &spec, 4097).unwrap();
        let step = 1.0 / 4096.0;
        let carriers = shift_carriers(&spec).unwrap();
        for wc in carriers.nonnegative_half() {
            let pos = wc / PI;
            let idx = (pos / step).round() as usize;
            assert!(
                trace.analytic_db[idx] > -0.5,
                "carrier at {pos:.4} pi sits at {} dB",
                trace.analytic_db[idx]
            );
        }
        let peak_idx = trace
            .analytic_db
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let nearest = carriers
            .nonnegative_half()
            .iter()
            .map(|wc| (trace.omega_over_pi[peak_idx] - wc / PI).abs())
            .fold(f64::MAX, f64::min);
        assert!(nearest <= step, "peak {nearest} grid steps from a carrier");
    }

    #[test]
    fn chebyshev_stopband_sits_in_the_recorded_band() {
        let spec = paper_spec();
        let filter = normalize_power(&dolph_chebyshev(16, 45.0).unwrap(), &spec).unwrap();
        let level = stopband_maximum_db(&filter, &spec, 4096).unwrap();
        assert!(
            (-90.0..=-40.0).contains(&level),
            "stopband maximum {level:.1} dB"
        );
    }

    #[test]
    fn empirical_psd_matches_analytic_in_band() {
        let spec = paper_spec();
        let trace = empirical_psd(&identity_filter(), &spec, 10_000, 512, 7).unwrap();
        let emp = trace.empirical_db.as_ref().unwrap();
        let mut worst = 0.0f64;
        for i in 0..emp.len() {
            if trace.analytic_db[i] >= -25.0 {
                worst = worst.max((trace.analytic_db[i] - emp[i]).abs());
            }
        }
        assert!(worst < 0.5, "worst in-band deviation {worst:.3} dB");
    }

    #[test]
    fn single_frame_periodogram_is_finite() {
        let spec = paper_spec();
        let trace = empirical_psd(&identity_filter(), &spec, 1, 512, 3).unwrap();
        assert!(trace
            .empirical_db
            .unwrap()
            .iter()
            .all(|v| v.is_finite()));
    }

    #[test]
    fn more_frames_tighten_the_periodogram() {
        let spec = paper_spec();
        let rms = |frames: u64| {
            let trace = empirical_psd(&identity_filter(), &spec, frames, 512, 11).unwrap();
            let emp = trace.empirical_db.unwrap();
            let mut acc = 0.0;
            let mut n = 0usize;
            for i in 0..emp.len() {
                if trace.analytic_db[i] >= -25.0 {
                    acc += (trace.analytic_db[i] - emp[i]).powi(2);
                    n += 1;
                }
            }
            (acc / n as f64).sqrt()
        };
        // 16x the frames should shrink the in-band RMS error by about 4x.
        assert!(rms(4096) < rms(256), "averaging did not tighten the estimate");
    }

    #[test]
    fn flat_identity_snr_is_one() {
        let cfg = ChainConfig::new(128, 0, (4..=19).collect(), identity_filter()).unwrap();
        let snr = snr_theoretical(&cfg, &ChannelRealization::flat(1.0)).unwrap();
        for v in snr {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(snr_theoretical(&cfg, &ChannelRealization::flat(0.0)).is_err());
    }

    #[test]
    fn paper_prefactor_shows_up_in_the_snr() {
        let cfg = chebyshev_config(16);
        let sigma = 2.0;
        let snr = snr_theoretical(&cfg, &ChannelRealization::flat(sigma)).unwrap();
        let prefactor = (128.0f64 / 159.0).sqrt();
        for (pos, v) in snr.iter().enumerate() {
            let expected = prefactor * cfg.carrier_response(pos).norm() / sigma;
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_tilde_basics() {
        assert!((sigma_tilde(&identity_config(0)) - 1.0).abs() < 1e-12);
        let base = dolph_chebyshev(16, 45.0).unwrap();
        let doubled = crate::fir::FirFilter::new(
            base.coefficients().iter().map(|v| 2.0 * v).collect(),
            crate::fir::Provenance::External,
        )
        .unwrap();
        let cfg_a = ChainConfig::new(128, 16, (4..=19).collect(), base).unwrap();
        let cfg_b = ChainConfig::new(128, 16, (4..=19).collect(), doubled).unwrap();
        assert!((sigma_tilde(&cfg_b) - 2.0 * sigma_tilde(&cfg_a)).abs() < 1e-9);
    }

    #[test]
    fn ber_matches_the_qpsk_closed_form_at_one_point() {
        let cfg = identity_config(0);
        let opts = BerOptions {
            snr_grid_db: vec![4.0],
            scale: SnrScale::EbN0,
            bits_per_point: 50_000,
            master_seed: 99,
        };
        let curve = run_ber_experiment(&cfg, ChannelModel::AwgnFlat, &opts).unwrap();
        let p = &curve.points[0];
        let theory = q_function((2.0 * 10f64.powf(0.4)).sqrt());
        let sigma3 = 3.0 * (theory * (1.0 - theory) / p.bits as f64).sqrt();
        assert!(
            (p.ber - theory).abs() <= sigma3,
            "ber {} vs theory {theory} (3 sigma {sigma3})",
            p.ber
        );
        assert!((p.eb_n0_db - 4.0).abs() < 1e-9);
        assert!((p.snr_db - (4.0 + 10.0 * 2.0f64.log10())).abs() < 1e-9);
    }

    #[test]
    fn huge_snr_means_zero_errors() {
        let cfg = chebyshev_config(16);
        let opts = BerOptions {
            snr_grid_db: vec![300.0],
            scale: SnrScale::SymbolToNoise,
            bits_per_point: 10_000,
            master_seed: 5,
        };
        let curve = run_ber_experiment(&cfg, ChannelModel::Rayleigh { taps: 12 }, &opts).unwrap();
        assert_eq!(curve.points[0].errors, 0);
        assert_eq!(curve.points[0].ci_low, 0.0);
    }

    #[test]
    fn ber_curve_is_monotone_after_smoothing() {
        let cfg = identity_config(0);
        let opts = BerOptions {
            snr_grid_db: (0..=5).map(|i| 2.0 * i as f64).collect(),
            scale: SnrScale::EbN0,
            bits_per_point: 20_000,
            master_seed: 21,
        };
        let curve = run_ber_experiment(&cfg, ChannelModel::AwgnFlat, &opts).unwrap();
        let bers: Vec<f64> = curve.points.iter().map(|p| p.ber).collect();
        let smooth: Vec<f64> = bers.windows(3).map(|w| (w[0] + w[1] + w[2]) / 3.0).collect();
        for pair in smooth.windows(2) {
            assert!(pair[1] <= pair[0] + 3e-3, "smoothed curve rose: {smooth:?}");
        }
    }

    #[test]
    fn ber_experiment_is_reproducible() {
        let cfg = chebyshev_config(16);
        let opts = BerOptions {
            snr_grid_db: vec![10.0],
            scale: SnrScale::SymbolToNoise,
            bits_per_point: 12_000,
            master_seed: 77,
        };
        let a = run_ber_experiment(&cfg, ChannelModel::Rayleigh { taps: 12 }, &opts).unwrap();
        let b = run_ber_experiment(&cfg, ChannelModel::Rayleigh { taps: 12 }, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.points[0].errors > 0);
    }

    #[test]
    fn ber_rejects_thin_runs_and_bad_models() {
        let cfg = identity_config(0);
        let mut opts = BerOptions {
            snr_grid_db: vec![4.0],
            scale: SnrScale::EbN0,
            bits_per_point: 100,
            master_seed: 0,
        };
        assert!(run_ber_experiment(&cfg, ChannelModel::AwgnFlat, &opts).is_err());
        opts.bits_per_point = 10_000;
        // 12-tap spread does not fit a zero padding of 0.
        assert!(
            run_ber_experiment(&cfg, ChannelModel::Rayleigh { taps: 12 }, &opts).is_err()
        );
        opts.snr_grid_db = vec![];
        assert!(run_ber_experiment(&cfg, ChannelModel::AwgnFlat, &opts).is_err());
    }

    #[test]
    fn single_carrier_envelope_is_flat() {
        let cfg = ChainConfig::new(128, 0, vec![7], identity_filter()).unwrap();
        let ccdf = compute_papr_ccdf(
            &cfg,
            &PaprOptions {
                symbols: 1_000,
                master_seed: 9,
                interpolate: 1,
            },
        )
        .unwrap();
        // Constant envelope: PAPR is 0 dB, so the CCDF is dead past 0 dB.
        assert_eq!(ccdf.ccdf[1], 0.0);
        assert!(ccdf.threshold_at(0.5).unwrap() <= 0.05 + 1e-12);
    }

    #[test]
    fn ofdm_ccdf_shape() {
        let cfg = identity_config(0);
        let ccdf = compute_papr_ccdf(
            &cfg,
            &PaprOptions {
                symbols: 2_000,
                master_seed: 13,
                interpolate: 1,
            },
        )
        .unwrap();
        assert_eq!(ccdf.ccdf[0], 1.0);
        assert!((ccdf.oversampling - 8.0).abs() < 1e-12);
        for pair in ccdf.ccdf.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        assert!(ccdf.threshold_at(1e-2).is_some());
    }

    #[test]
    fn papr_is_reproducible_and_interpolation_runs() {
        let cfg = chebyshev_config(0);
        let opts = PaprOptions {
            symbols: 1_000,
            master_seed: 31,
            interpolate: 1,
        };
        let a = compute_papr_ccdf(&cfg, &opts).unwrap();
        let b = compute_papr_ccdf(&cfg, &opts).unwrap();
        assert_eq!(a, b);
        let fine = compute_papr_ccdf(
            &cfg,
            &PaprOptions {
                interpolate: 4,
                ..opts
            },
        )
        .unwrap();
        // Peaks between samples only push the measured PAPR up.
        let coarse_t = a.threshold_at(0.1).unwrap();
        let fine_t = fine.threshold_at(0.1).unwrap();
        assert!(fine_t >= coarse_t - 0.051, "{fine_t} vs {coarse_t}");
    }

    #[test]
    fn interior_window_power_matches_sigma_tilde() {
        let cfg = chebyshev_config(16);
        let ratio = interior_power_ratio(&cfg, 4_000, 17).unwrap();
        let expected = sigma_tilde(&cfg).powi(2);
        assert!(
            (ratio - expected).abs() < 0.02 * expected,
            "interior power {ratio} vs sigma~^2 {expected}"
        );
    }

    #[test]
    fn csv_writers_emit_headers_and_rows() {
        let spec = paper_spec();
        let trace = analytic_psd(&identity_filter(), &spec, 256).unwrap();
        let mut psd = Vec::new();
        write_psd_csv(&mut psd, &trace).unwrap();
        let text = String::from_utf8(psd).unwrap();
        assert!(text.starts_with("omega_over_pi,analytic_db,empirical_db\n"));
        assert_eq!(text.lines().count(), 257);
        assert!(text.lines().nth(1).unwrap().ends_with(','));

        let cfg = identity_config(0);
        let opts = BerOptions {
            snr_grid_db: vec![2.0, 4.0],
            scale: SnrScale::EbN0,
            bits_per_point: 10_000,
            master_seed: 3,
        };
        let curve = run_ber_experiment(&cfg, ChannelModel::AwgnFlat, &opts).unwrap();
        let mut ber = Vec::new();
        write_ber_csv(&mut ber, &curve).unwrap();
        let text = String::from_utf8(ber).unwrap();
        assert!(text.starts_with("snr_db,eb_n0_db,bits,errors,ber,ci_low,ci_high\n"));
        assert_eq!(text.lines().count(), 3);
        let reparsed: f64 = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(4)
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(reparsed, curve.points[0].ber);

        let ccdf = compute_papr_ccdf(
            &cfg,
            &PaprOptions {
                symbols: 1_000,
                master_seed: 1,
                interpolate: 1,
            },
        )
        .unwrap();
        let mut out = Vec::new();
        write_ccdf_csv(&mut out, &ccdf).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("threshold_db,ccdf\n"));
        assert_eq!(text.lines().count(), 282);
    }

    #[test]
    fn psd_rejects_coarse_grids_and_tiny_ffts() {
        let spec = paper_spec();
        assert!(analytic_psd(&identity_filter(), &spec, 100).is_err());
        assert!(empirical_psd(&identity_filter(), &spec, 10, 256, 0).is_err());
        assert!(empirical_psd(&identity_filter(), &spec, 0, 512, 0).is_err());
    }
}
