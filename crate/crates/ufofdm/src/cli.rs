//! Command-line front end. Every subcommand writes one product file plus a
//! sibling manifest holding the full parameter set, seed, input/output
//! digests, and timing, so any output can be reproduced byte for byte.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 the design
//! problem has no solution, 4 numerical failure downstream of the solver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    analytic_psd, compute_papr_ccdf, empirical_psd, run_ber_experiment, stopband_maximum_db,
    write_ber_csv, write_ccdf_csv, write_psd_csv, BerOptions, ChannelModel, PaprOptions, SnrScale,
};
use crate::chain::ChainConfig;
use crate::design::{design_filter, parse_angle, parse_carriers, DesignSpec};
use crate::error::{Error, Result};
use crate::fir::FilterRecord;
use crate::windows::{dolph_chebyshev, normalize_power};

#[derive(Parser, Debug)]
#[command(
    name = "ufofdm",
    version,
    about = "Side-lobe-suppressing filter design and UF-OFDM link simulation"
)]
pub struct Cli {
    /// Worker threads for the Monte Carlo loops (UFOFDM_THREADS also works;
    /// the flag wins). Results do not depend on the thread count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the stopband design problem and write the filter as JSON.
    Design(DesignArgs),
    /// Write a power-normalized Dolph-Chebyshev filter as JSON.
    Chebyshev(ChebyshevArgs),
    /// Evaluate a filter's transmit power spectrum to CSV.
    Spectrum(SpectrumArgs),
    /// Run the QPSK link and write a BER curve to CSV.
    Ber(BerArgs),
    /// Estimate the PAPR CCDF of the filtered transmit signal to CSV.
    Papr(PaprArgs),
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// IFFT size M.
    #[arg(long = "M", default_value_t = 128)]
    ifft_size: usize,

    /// Filter length N in taps.
    #[arg(long = "N", default_value_t = 16)]
    taps: usize,

    /// Carrier index range "4:19" (inclusive) or explicit list "4,5,6".
    #[arg(long, default_value = "4:19")]
    carriers: String,

    /// Trade-off weight on the passband floor.
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,

    /// Lower edge of the suppressed band; accepts "17pi/64" or radians.
    #[arg(long, default_value = "17pi/64")]
    stopband_start: String,

    /// Stopband constraint samples (default 15 N).
    #[arg(long = "grid-S")]
    grid_s: Option<usize>,

    /// Nonnegativity constraint samples (default 16 N).
    #[arg(long = "grid-G")]
    grid_g: Option<usize>,

    /// key = value file; when given it overrides all the flags above.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output filter path.
    #[arg(long, default_value = "filter.json")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ChebyshevArgs {
    /// Filter length N (at least 2).
    #[arg(long = "N", default_value_t = 16)]
    taps: usize,

    /// Side-lobe level below the main lobe, in dB.
    #[arg(long, default_value_t = 45.0)]
    attenuation_db: f64,

    /// IFFT size M used for power normalization.
    #[arg(long = "M", default_value_t = 128)]
    ifft_size: usize,

    /// Carrier set used for power normalization.
    #[arg(long, default_value = "4:19")]
    carriers: String,

    /// Output filter path.
    #[arg(long, default_value = "chebyshev.json")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    /// Filter record to evaluate.
    #[arg(long)]
    filter: PathBuf,

    /// Analytic grid points over [0, pi]; with --empirical the FFT size is
    /// derived from this instead.
    #[arg(long, default_value_t = 4097)]
    points: usize,

    /// Also estimate the spectrum from this many random frames.
    #[arg(long)]
    empirical: Option<u64>,

    /// Master seed for the empirical estimate.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Output CSV path.
    #[arg(long, default_value = "psd.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BerArgs {
    /// Filter record to simulate with.
    #[arg(long)]
    filter: PathBuf,

    /// Channel model.
    #[arg(long, value_enum, default_value_t = ChannelKind::Rayleigh)]
    channel: ChannelKind,

    /// Fading channel taps L (rayleigh only); needs L - 1 <= D.
    #[arg(long = "L", default_value_t = 12)]
    channel_taps: usize,

    /// Zero-padding length D appended to each block.
    #[arg(long = "D", default_value_t = 16)]
    zero_pad: usize,

    /// Grid "lo:step:hi" in dB (inclusive), or a single value.
    #[arg(long, default_value = "0:2:16")]
    snr_db: String,

    /// Meaning of the grid values.
    #[arg(long, value_enum, default_value_t = ScaleKind::Snr)]
    scale: ScaleKind,

    /// Bits per grid point (at least 10^4).
    #[arg(long, default_value_t = 1_000_000)]
    bits: u64,

    /// Master seed; shared seeds give different filters the same channels.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Output CSV path.
    #[arg(long, default_value = "ber.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PaprArgs {
    /// Filter record to simulate with.
    #[arg(long)]
    filter: PathBuf,

    /// Symbol frames to draw.
    #[arg(long, default_value_t = 100_000)]
    symbols: u64,

    /// Master seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Bandlimited oversampling factor applied before the peak search.
    #[arg(long, default_value_t = 1)]
    interpolate: usize,

    /// Output CSV path.
    #[arg(long, default_value = "ccdf.csv")]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ChannelKind {
    /// Flat unit channel with additive white Gaussian noise.
    Awgn,
    /// Independent Rayleigh taps with unit total average power.
    Rayleigh,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ScaleKind {
    /// Grid values are sigma_s^2 / sigma_n^2 in dB.
    Snr,
    /// Grid values are Eb/N0 in dB.
    Ebn0,
}

/// Reproducibility sidecar written next to every output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub version: String,
    pub threads: usize,
    /// sha256 of each input file.
    pub inputs: BTreeMap<String, String>,
    /// sha256 of each output file.
    pub outputs: BTreeMap<String, String>,
    pub duration_seconds: f64,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub results: serde_json::Value,
}

/// Parses the arguments, runs one subcommand, and maps errors onto the
/// documented exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let threads = configure_threads(cli.threads);
    let outcome = match &cli.command {
        Command::Design(a) => cmd_design(a, threads),
        Command::Chebyshev(a) => cmd_chebyshev(a, threads),
        Command::Spectrum(a) => cmd_spectrum(a, threads),
        Command::Ber(a) => cmd_ber(a, threads),
        Command::Papr(a) => cmd_papr(a, threads),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_) | Error::Config(_) | Error::Io(_) | Error::Json(_) => 2,
        Error::Solver(_) => 3,
        Error::Factorization(_)
        | Error::SpectralNull { .. }
        | Error::Experiment(_)
        | Error::NoConvergence(_) => 4,
    }
}

fn requested_threads(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("UFOFDM_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

#[cfg(feature = "parallel")]
fn configure_threads(flag: Option<usize>) -> usize {
    if let Some(n) = requested_threads(flag).filter(|&n| n > 0) {
        // fails only when a pool already exists; the earlier choice stands
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    rayon::current_num_threads()
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(flag: Option<usize>) -> usize {
    let _ = requested_threads(flag);
    1
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn sha256_hex(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(std::fs::read(path)?);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    Ok(hex)
}

/// Collects manifest fields while a command runs; `write` stamps the digests
/// and duration once the product file is on disk.
struct ManifestDraft {
    command: &'static str,
    parameters: serde_json::Value,
    master_seed: Option<u64>,
    threads: usize,
    inputs: Vec<PathBuf>,
    results: serde_json::Value,
    started: Instant,
}

impl ManifestDraft {
    fn new(command: &'static str, threads: usize) -> Self {
        ManifestDraft {
            command,
            parameters: serde_json::Value::Null,
            master_seed: None,
            threads,
            inputs: Vec::new(),
            results: serde_json::Value::Null,
            started: Instant::now(),
        }
    }

    fn write(self, out: &Path) -> Result<()> {
        let mut inputs = BTreeMap::new();
        for path in &self.inputs {
            inputs.insert(path.display().to_string(), sha256_hex(path)?);
        }
        let mut outputs = BTreeMap::new();
        outputs.insert(out.display().to_string(), sha256_hex(out)?);
        let manifest = RunManifest {
            command: self.command.to_string(),
            parameters: self.parameters,
            master_seed: self.master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: self.threads,
            inputs,
            outputs,
            duration_seconds: self.started.elapsed().as_secs_f64(),
            results: self.results,
        };
        let path = manifest_path(out);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        println!("manifest {}", path.display());
        Ok(())
    }
}

/// Rebuilds the design-time context stored in a filter record. The stopband
/// edge and grid sizes are not stored, so reports fall back to the stock
/// edge and grids scaled to the tap count.
fn spec_from_record(record: &FilterRecord) -> Result<DesignSpec> {
    let spec = DesignSpec {
        ifft_size: record.ifft_size,
        taps: record.taps,
        carriers: record.carriers.clone(),
        lambda: record.lambda.unwrap_or(1e-4),
        stopband_grid: 15 * record.taps,
        nonneg_grid: 16 * record.taps,
        ..DesignSpec::default()
    };
    spec.validate()?;
    Ok(spec)
}

/// "lo:step:hi" inclusive grid, or a single number.
fn parse_snr_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parameter(format!("cannot parse SNR grid '{text}'"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [one] => Ok(vec![num(one)?]),
        [lo, step, hi] => {
            let (lo, step, hi) = (num(lo)?, num(step)?, num(hi)?);
            if !(step > 0.0) || hi < lo {
                return Err(bad());
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|i| lo + i as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

fn warn_on_printed_band_edge(stopband_start: f64) {
    let printed = 7.0 * std::f64::consts::PI / 64.0;
    if (stopband_start - printed).abs() < 1e-9 {
        log::warn!(
            "stopband edge 7pi/64 lies inside the occupied band for the stock \
             carrier set; 17pi/64 is the corrected edge"
        );
    }
}

fn cmd_design(args: &DesignArgs, threads: usize) -> Result<()> {
    let mut draft = ManifestDraft::new("design", threads);
    let spec = match &args.config {
        Some(path) => {
            draft.inputs.push(path.clone());
            DesignSpec::read_config_file(path)?
        }
        None => {
            let spec = DesignSpec {
                ifft_size: args.ifft_size,
                taps: args.taps,
                carriers: parse_carriers(&args.carriers)?,
                lambda: args.lambda,
                stopband_start: parse_angle(&args.stopband_start)?,
                stopband_grid: args.grid_s.unwrap_or(15 * args.taps),
                nonneg_grid: args.grid_g.unwrap_or(16 * args.taps),
            };
            spec.validate()?;
            spec
        }
    };
    warn_on_printed_band_edge(spec.stopband_start);

    let outcome = design_filter(&spec)?;
    let record = FilterRecord::new(&outcome.filter, &spec);
    record.save(&args.out)?;

    let power_residual = outcome.autocorrelation.power_residual()?;
    let grid_minimum = outcome.autocorrelation.grid_minimum(1 << 14);
    let stopband_db = stopband_maximum_db(&outcome.filter, &spec, 1 << 14)?;

    println!("objective        {:+.9e}", outcome.objective);
    println!("t1 (stopband)    {:+.9e}", outcome.t1);
    println!("t2 (floor)       {:+.9e}", outcome.t2);
    println!("lp iterations    {}", outcome.lp_iterations);
    println!("repair delta     {:.3e}", outcome.repair_delta);
    println!("power residual   {:.3e}", power_residual);
    println!("grid minimum     {:+.3e}", grid_minimum);
    println!("stopband maximum {:.2} dB", stopband_db);
    println!("wrote {} ({} taps)", args.out.display(), record.taps);

    draft.parameters = json!({
        "ifft_size": spec.ifft_size,
        "taps": spec.taps,
        "carriers": spec.carriers,
        "lambda": spec.lambda,
        "stopband_start": spec.stopband_start,
        "stopband_grid": spec.stopband_grid,
        "nonneg_grid": spec.nonneg_grid,
        "config": args.config.as_ref().map(|p| p.display().to_string()),
    });
    draft.results = json!({
        "objective": outcome.objective,
        "t1": outcome.t1,
        "t2": outcome.t2,
        "lp_iterations": outcome.lp_iterations,
        "repair_delta": outcome.repair_delta,
        "power_residual": power_residual,
        "grid_minimum": grid_minimum,
        "stopband_maximum_db": stopband_db,
    });
    draft.write(&args.out)
}

fn cmd_chebyshev(args: &ChebyshevArgs, threads: usize) -> Result<()> {
    let mut draft = ManifestDraft::new("chebyshev", threads);
    let spec = DesignSpec {
        ifft_size: args.ifft_size,
        taps: args.taps,
        carriers: parse_carriers(&args.carriers)?,
        stopband_grid: 15 * args.taps,
        nonneg_grid: 16 * args.taps,
        ..DesignSpec::default()
    };
    spec.validate()?;
    let window = dolph_chebyshev(args.taps, args.attenuation_db)?;
    let filter = normalize_power(&window, &spec)?;
    let record = FilterRecord::new(&filter, &spec);
    record.save(&args.out)?;
    println!(
        "wrote {} ({} taps, {} dB side lobes, power-normalized)",
        args.out.display(),
        args.taps,
        args.attenuation_db
    );
    draft.parameters = json!({
        "taps": args.taps,
        "attenuation_db": args.attenuation_db,
        "ifft_size": args.ifft_size,
        "carriers": spec.carriers,
    });
    draft.write(&args.out)
}

fn cmd_spectrum(args: &SpectrumArgs, threads: usize) -> Result<()> {
    let mut draft = ManifestDraft::new("spectrum", threads);
    draft.inputs.push(args.filter.clone());
    let record = FilterRecord::load(&args.filter)?;
    let filter = record.filter()?;
    let spec = spec_from_record(&record)?;
    let trace = match args.empirical {
        Some(frames) => {
            draft.master_seed = Some(args.seed);
            let fft = (2 * (args.points.max(2) - 1))
                .next_power_of_two()
                .max(4 * spec.ifft_size);
            empirical_psd(&filter, &spec, frames, fft, args.seed)?
        }
        None => analytic_psd(&filter, &spec, args.points)?,
    };
    let stopband_db = stopband_maximum_db(&filter, &spec, 1 << 14)?;
    let mut file = BufWriter::new(File::create(&args.out)?);
    write_psd_csv(&mut file, &trace)?;
    file.flush()?;
    println!(
        "stopband maximum {:.2} dB above {:.6} rad",
        stopband_db, spec.stopband_start
    );
    println!("wrote {} ({} rows)", args.out.display(), trace.omega_over_pi.len());
    draft.parameters = json!({
        "filter": args.filter.display().to_string(),
        "points": args.points,
        "empirical_frames": args.empirical,
    });
    draft.results = json!({
        "stopband_maximum_db": stopband_db,
        "rows": trace.omega_over_pi.len(),
    });
    draft.write(&args.out)
}

fn cmd_ber(args: &BerArgs, threads: usize) -> Result<()> {
    let mut draft = ManifestDraft::new("ber", threads);
    draft.inputs.push(args.filter.clone());
    draft.master_seed = Some(args.seed);
    let record = FilterRecord::load(&args.filter)?;
    let filter = record.filter()?;
    let cfg = ChainConfig::new(
        record.ifft_size,
        args.zero_pad,
        record.carriers.clone(),
        filter,
    )?;
    let model = match args.channel {
        ChannelKind::Awgn => ChannelModel::AwgnFlat,
        ChannelKind::Rayleigh => ChannelModel::Rayleigh {
            taps: args.channel_taps,
        },
    };
    let opts = BerOptions {
        snr_grid_db: parse_snr_grid(&args.snr_db)?,
        scale: match args.scale {
            ScaleKind::Snr => SnrScale::SymbolToNoise,
            ScaleKind::Ebn0 => SnrScale::EbN0,
        },
        bits_per_point: args.bits,
        master_seed: args.seed,
    };
    let curve = run_ber_experiment(&cfg, model, &opts)?;
    let mut file = BufWriter::new(File::create(&args.out)?);
    write_ber_csv(&mut file, &curve)?;
    file.flush()?;
    for p in &curve.points {
        println!(
            "snr {:6.2} dB  ber {:.4e}  [{:.4e}, {:.4e}]  ({} errors / {} bits)",
            p.snr_db, p.ber, p.ci_low, p.ci_high, p.errors, p.bits
        );
    }
    println!("wrote {}", args.out.display());
    draft.parameters = json!({
        "filter": args.filter.display().to_string(),
        "channel": match args.channel {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        },
        "channel_taps": args.channel_taps,
        "zero_pad": args.zero_pad,
        "snr_db": args.snr_db,
        "scale": match args.scale {
            ScaleKind::Snr => "snr",
            ScaleKind::Ebn0 => "ebn0",
        },
        "bits": args.bits,
    });
    draft.results = json!({ "points": curve.points.len() });
    draft.write(&args.out)
}

fn cmd_papr(args: &PaprArgs, threads: usize) -> Result<()> {
    let mut draft = ManifestDraft::new("papr", threads);
    draft.inputs.push(args.filter.clone());
    draft.master_seed = Some(args.seed);
    let record = FilterRecord::load(&args.filter)?;
    let filter = record.filter()?;
    // zero padding never carries signal power, so the CCDF ignores it
    let cfg = ChainConfig::new(record.ifft_size, 0, record.carriers.clone(), filter)?;
    let opts = PaprOptions {
        symbols: args.symbols,
        master_seed: args.seed,
        interpolate: args.interpolate,
    };
    let ccdf = compute_papr_ccdf(&cfg, &opts)?;
    let mut file = BufWriter::new(File::create(&args.out)?);
    write_ccdf_csv(&mut file, &ccdf)?;
    file.flush()?;
    for level in [1e-1, 1e-2, 1e-3] {
        match ccdf.threshold_at(level) {
            Some(t) => println!("ccdf {level:.0e} at {t:5.2} dB"),
            None => println!("ccdf {level:.0e} not reached on the grid"),
        }
    }
    println!("wrote {}", args.out.display());
    draft.parameters = json!({
        "filter": args.filter.display().to_string(),
        "symbols": args.symbols,
        "interpolate": args.interpolate,
    });
    draft.results = json!({
        "symbols_evaluated": ccdf.symbols_evaluated,
        "oversampling": ccdf.oversampling,
    });
    draft.write(&args.out)
}
