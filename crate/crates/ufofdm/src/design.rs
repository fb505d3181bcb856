//! Formulation of the side-lobe suppression problem: carrier geometry,
//! expected transmit spectrum, the signal-power conservation row, and
//! assembly of the discretized linear program over the filter
//! autocorrelation g and the two auxiliary levels (t_1, t_2).
//!
//! Working in g instead of the taps keeps every constraint linear:
//! F_g(omega) = g_0 + 2 sum g_n cos(n omega) is the filter's power response,
//! and any nonnegative F_g factors back into taps afterwards.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Matrix};

/// Grid points closer than this to a carrier are dropped from the stopband
/// grid; a stopband sample on top of a protected carrier would contradict
/// the passband floor.
fn carrier_guard(m: usize) -> f64 {
    TAU / (8.0 * m as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// IFFT size M (samples per core symbol).
    pub ifft_size: usize,
    /// Filter length N (taps).
    pub taps: usize,
    /// Carrier indices J, consecutive modulo ifft_size.
    pub carriers: Vec<usize>,
    /// Trade-off weight on the passband floor t_2.
    pub lambda: f64,
    /// Lower edge of the suppressed band, in radians.
    pub stopband_start: f64,
    /// Number of stopband constraint samples S.
    pub stopband_grid: usize,
    /// Number of nonnegativity constraint samples G.
    pub nonneg_grid: usize,
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec {
            ifft_size: 128,
            taps: 16,
            carriers: (4..=19).collect(),
            lambda: 1e-4,
            stopband_start: 17.0 * PI / 64.0,
            stopband_grid: 15 * 16,
            nonneg_grid: 16 * 16,
        }
    }
}

impl DesignSpec {
    pub fn num_carriers(&self) -> usize {
        self.carriers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.ifft_size;
        let n = self.taps;
        if m == 0 || n == 0 || n > m {
            return Err(Error::Parameter(format!(
                "need 1 <= taps <= ifft_size, got taps={n}, ifft_size={m}"
            )));
        }
        if self.carriers.is_empty() {
            return Err(Error::Parameter("carrier set is empty".into()));
        }
        if self.carriers.iter().any(|&k| k >= m) {
            return Err(Error::Parameter(format!(
                "carrier index out of range 0..{m}"
            )));
        }
        self.consecutive_start()?;
        if !(self.stopband_start > 0.0 && self.stopband_start < PI) {
            return Err(Error::Parameter(format!(
                "stopband_start must lie in (0, pi), got {}",
                self.stopband_start
            )));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Parameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.stopband_grid < n || self.nonneg_grid < n {
            return Err(Error::Parameter(format!(
                "grids must have at least taps={n} samples, got S={}, G={}",
                self.stopband_grid, self.nonneg_grid
            )));
        }
        Ok(())
    }

    /// First index of the consecutive run modulo ifft_size.
    fn consecutive_start(&self) -> Result<usize> {
        let m = self.ifft_size;
        let k = self.carriers.len();
        let mut present = vec![false; m];
        for &c in &self.carriers {
            if present[c] {
                return Err(Error::Parameter(format!("duplicate carrier index {c}")));
            }
            present[c] = true;
        }
        if k == m {
            return Ok(0);
        }
        // exactly one circular gap means exactly one index whose predecessor
        // is absent
        let starts: Vec<usize> = (0..m)
            .filter(|&i| present[i] && !present[(i + m - 1) % m])
            .collect();
        match starts.as_slice() {
            [s] => Ok(*s),
            _ => Err(Error::Parameter(
                "carriers must be consecutive integers modulo ifft_size".into(),
            )),
        }
    }

    /// Midpoint s of the carrier run; the shifted frequencies 2 pi (k - s)/M
    /// are symmetric about zero.
    pub fn carrier_midpoint(&self) -> Result<f64> {
        let start = self.consecutive_start()?;
        Ok(start as f64 + (self.carriers.len() as f64 - 1.0) / 2.0)
    }
}

/// Carrier angular frequencies after the symmetrizing shift, stored as the
/// nonnegative half (the full set is the union with the mirrored negatives).
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierFrequencies {
    nonneg: Vec<f64>,
}

impl CarrierFrequencies {
    pub fn nonnegative_half(&self) -> &[f64] {
        &self.nonneg
    }

    /// Full symmetric set: negatives first, ascending.
    pub fn full_set(&self) -> Vec<f64> {
        let mut full: Vec<f64> = self
            .nonneg
            .iter()
            .rev()
            .filter(|w| **w > 0.0)
            .map(|w| -w)
            .collect();
        full.extend_from_slice(&self.nonneg);
        full
    }
}

pub fn shift_carriers(spec: &DesignSpec) -> Result<CarrierFrequencies> {
    spec.validate()?;
    let m = spec.ifft_size as f64;
    let s = spec.carrier_midpoint()?;
    let start = spec.consecutive_start()?;
    let k = spec.carriers.len();
    let mut nonneg: Vec<f64> = (0..k)
        .map(|i| TAU * (start as f64 + i as f64 - s) / m)
        .filter(|w| *w >= 0.0)
        .collect();
    nonneg.sort_by(f64::total_cmp);
    Ok(CarrierFrequencies { nonneg })
}

/// Dirichlet-kernel amplitude: alpha(theta) = sin(M theta / 2)/sin(theta/2),
/// with alpha = M at multiples of 2 pi. Squared it is 2 pi periodic.
fn dirichlet_amplitude(m: usize, theta: f64) -> f64 {
    let wrapped = theta - TAU * (theta / TAU).round();
    if wrapped.abs() < 1e-9 {
        m as f64
    } else {
        (m as f64 * wrapped / 2.0).sin() / (wrapped / 2.0).sin()
    }
}

/// Expected squared magnitude of the unfiltered transmit spectrum at omega,
/// averaged over unit-power symbols: (1/M) sum over the full carrier set of
/// alpha(omega_c - omega)^2.
pub fn expected_spectrum(spec: &DesignSpec, carriers: &CarrierFrequencies, omega: f64) -> f64 {
    let m = spec.ifft_size;
    carriers
        .full_set()
        .iter()
        .map(|wc| dirichlet_amplitude(m, wc - omega).powi(2))
        .sum::<f64>()
        / m as f64
}

/// Coefficient vector b_c of the power conservation row b_c'g = K(M+N-1):
/// b_0 = K M and b_n = sum over the full carrier set of 2 (M-n) cos(n w_c).
pub fn power_vector(spec: &DesignSpec, carriers: &CarrierFrequencies) -> Result<Vec<f64>> {
    spec.validate()?;
    let m = spec.ifft_size;
    let n = spec.taps;
    if n > m {
        return Err(Error::Parameter("taps exceed ifft_size".into()));
    }
    let full = carriers.full_set();
    let mut b = Vec::with_capacity(n);
    b.push((full.len() * m) as f64);
    for lag in 1..n {
        let v: f64 = full
            .iter()
            .map(|wc| 2.0 * (m - lag) as f64 * (lag as f64 * wc).cos())
            .sum();
        b.push(v);
    }
    Ok(b)
}

/// F_g row coefficients at omega for the variable order (g_0..g_{N-1}).
fn response_row(n: usize, omega: f64) -> Vec<f64> {
    (0..n)
        .map(|lag| {
            if lag == 0 {
                1.0
            } else {
                2.0 * (lag as f64 * omega).cos()
            }
        })
        .collect()
}

pub(crate) fn uniform_grid(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    (0..count)
        .map(|i| a + (b - a) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Builds the LP over x = (g_0..g_{N-1}, t_1, t_2):
///
///   minimize t_1 - lambda t_2
///   F_g(w_i) E(w_i) <= t_1        on the stopband grid
///   F_g(w_c)        >= t_2        at each nonnegative-half carrier
///   b_c'g = K (M + N - 1)
///   F_g(w_i)        >= 0          on the nonnegativity grid
///   t_1, t_2 >= 0, g free
pub fn assemble_lp(spec: &DesignSpec, carriers: &CarrierFrequencies) -> Result<LinearProgram> {
    spec.validate()?;
    let n = spec.taps;
    let num_vars = n + 2;
    let (t1_col, t2_col) = (n, n + 1);

    let guard = carrier_guard(spec.ifft_size);
    let stopband: Vec<f64> = uniform_grid(spec.stopband_start, PI, spec.stopband_grid)
        .into_iter()
        .filter(|w| {
            carriers
                .nonnegative_half()
                .iter()
                .all(|wc| (w - wc).abs() >= guard)
        })
        .collect();
    let dropped = spec.stopband_grid - stopband.len();
    if dropped > 0 {
        log::warn!(
            "stopband grid overlaps the carrier band: dropped {dropped} of {} samples",
            spec.stopband_grid
        );
    }
    if stopband.is_empty() {
        return Err(Error::Config(
            "stopband grid lies entirely inside the carrier band; raise stopband_start".into(),
        ));
    }

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for &w in &stopband {
        let e = expected_spectrum(spec, carriers, w);
        let mut row = response_row(n, w);
        for v in &mut row {
            *v *= e;
        }
        row.resize(num_vars, 0.0);
        row[t1_col] = -1.0;
        rows.push(row);
        rhs.push(0.0);
    }
    for &wc in carriers.nonnegative_half() {
        let mut row: Vec<f64> = response_row(n, wc).iter().map(|v| -v).collect();
        row.resize(num_vars, 0.0);
        row[t2_col] = 1.0;
        rows.push(row);
        rhs.push(0.0);
    }
    for w in uniform_grid(0.0, PI, spec.nonneg_grid) {
        let mut row: Vec<f64> = response_row(n, w).iter().map(|v| -v).collect();
        row.resize(num_vars, 0.0);
        rows.push(row);
        rhs.push(0.0);
    }

    let mut eq_row = power_vector(spec, carriers)?;
    eq_row.resize(num_vars, 0.0);
    let power_target = (spec.num_carriers() * (spec.ifft_size + n - 1)) as f64;

    let mut objective = vec![0.0; num_vars];
    objective[t1_col] = 1.0;
    objective[t2_col] = -spec.lambda;

    let mut lower_bounds = vec![None; num_vars];
    lower_bounds[t1_col] = Some(0.0);
    lower_bounds[t2_col] = Some(0.0);

    Ok(LinearProgram {
        objective,
        a_ub: Matrix::from_rows(rows)?,
        b_ub: rhs,
        a_eq: Matrix::from_rows(vec![eq_row])?,
        b_eq: vec![power_target],
        lower_bounds,
    })
}

/// Symmetric autocorrelation sequence g_0..g_{N-1} (g_{-n} = g_n implied)
/// together with the design context it was solved under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub g: Vec<f64>,
    pub ifft_size: usize,
    pub carriers: Vec<usize>,
}

impl Autocorrelation {
    /// Power response F_g(omega) = g_0 + 2 sum g_n cos(n omega).
    pub fn evaluate(&self, omega: f64) -> f64 {
        let mut acc = self.g[0];
        for (lag, gn) in self.g.iter().enumerate().skip(1) {
            acc += 2.0 * gn * (lag as f64 * omega).cos();
        }
        acc
    }

    /// Minimum of F_g over a dense uniform grid on [0, pi].
    pub fn grid_minimum(&self, points: usize) -> f64 {
        uniform_grid(0.0, PI, points)
            .into_iter()
            .map(|w| self.evaluate(w))
            .fold(f64::INFINITY, f64::min)
    }

    /// Signed residual of the power conservation equality, relative to its
    /// target K(M+N-1).
    pub fn power_residual(&self) -> Result<f64> {
        let spec = DesignSpec {
            ifft_size: self.ifft_size,
            taps: self.g.len(),
            carriers: self.carriers.clone(),
            ..DesignSpec::default()
        };
        let carriers = shift_carriers(&spec)?;
        let b = power_vector(&spec, &carriers)?;
        let target = (spec.num_carriers() * (spec.ifft_size + spec.taps - 1)) as f64;
        let actual: f64 = b.iter().zip(&self.g).map(|(bi, gi)| bi * gi).sum();
        Ok((actual - target) / target)
    }
}

/// Everything produced by a successful filter design run.
#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub filter: crate::fir::FirFilter,
    pub autocorrelation: Autocorrelation,
    /// LP objective t_1 - lambda t_2 at the optimum.
    pub objective: f64,
    /// Worst weighted stopband level t_1.
    pub t1: f64,
    /// Passband floor t_2.
    pub t2: f64,
    pub lp_iterations: usize,
    /// Amount the zero lag was lifted by the nonnegativity repair (0 when
    /// the LP solution was already nonnegative on the dense grid).
    pub repair_delta: f64,
}

/// Full design pipeline: assemble the LP, solve it, repair marginal
/// negativity of the returned autocorrelation, and factor it into
/// minimum-phase taps.
pub fn design_filter(spec: &DesignSpec) -> Result<DesignOutcome> {
    use crate::lp::{solve_lp, LpStatus};

    spec.validate()?;
    let carriers = shift_carriers(spec)?;
    let lp = assemble_lp(spec, &carriers)?;
    let sol = solve_lp(&lp, 1e-9, 300)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            let cert = sol
                .certificate
                .as_ref()
                .map(|y| {
                    let norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    format!(
                        " (Farkas certificate: {} duals, max |y| = {norm:.3e}, \
                         certified gap {:.3e})",
                        y.len(),
                        sol.dual_objective
                    )
                })
                .unwrap_or_default();
            return Err(Error::Solver(format!(
                "design constraints are infeasible; widen the stopband or relax lambda{cert}"
            )));
        }
        LpStatus::Unbounded => {
            return Err(Error::Solver(
                "design problem is unbounded; check lambda and the carrier set".into(),
            ))
        }
        LpStatus::MaxIters => {
            return Err(Error::NoConvergence(format!(
                "interior-point solve stalled after {} iterations \
                 (primal residual {:.2e}, dual residual {:.2e})",
                sol.iterations, sol.residuals.primal, sol.residuals.dual
            )))
        }
    }
    let n = spec.taps;
    let raw = Autocorrelation {
        g: sol.x[..n].to_vec(),
        ifft_size: spec.ifft_size,
        carriers: spec.carriers.clone(),
    };
    let t1 = sol.x[n];
    let t2 = sol.x[n + 1];
    let repair_delta = (-raw.grid_minimum(1 << 14)).max(0.0);
    let repaired = crate::fir::repair_nonnegativity(&raw, spec)?;
    let filter = crate::fir::factorize(&repaired, 1e-9)?
        .with_provenance(crate::fir::Provenance::Designed { lambda: spec.lambda });
    Ok(DesignOutcome {
        filter,
        autocorrelation: repaired,
        objective: sol.objective,
        t1,
        t2,
        lp_iterations: sol.iterations,
        repair_delta,
    })
}

/// Parses an angle given as a decimal number or a rational multiple of pi:
/// "17pi/64", "pi/4", "2pi", "pi", "0.8345", optionally with a '*' before pi.
pub fn parse_angle(text: &str) -> Result<f64> {
    let s = text.trim().to_ascii_lowercase().replace(['*', ' '], "");
    let bad = || Error::Parameter(format!("cannot parse angle '{text}'"));
    let (num_part, den): (&str, f64) = match s.split_once('/') {
        Some((a, b)) => (a, b.parse::<f64>().map_err(|_| bad())?),
        None => (s.as_str(), 1.0),
    };
    let value = if let Some(prefix) = num_part.strip_suffix("pi") {
        let factor = if prefix.is_empty() {
            1.0
        } else {
            prefix.parse::<f64>().map_err(|_| bad())?
        };
        factor * PI
    } else {
        num_part.parse::<f64>().map_err(|_| bad())?
    };
    let angle = value / den;
    if !angle.is_finite() {
        return Err(bad());
    }
    Ok(angle)
}

fn format_angle(w: f64) -> String {
    // prefer an exact small rational multiple of pi for readability
    for den in [1u32, 2, 3, 4, 6, 8, 16, 32, 64, 128, 256] {
        let num = w * den as f64 / PI;
        if (num - num.round()).abs() < 1e-12 && num.round() != 0.0 {
            let n = num.round() as i64;
            return if n == 1 && den == 1 {
                "pi".to_string()
            } else if den == 1 {
                format!("{n}pi")
            } else if n == 1 {
                format!("pi/{den}")
            } else {
                format!("{n}pi/{den}")
            };
        }
    }
    format!("{w}")
}

fn format_carriers(carriers: &[usize]) -> String {
    let consecutive = carriers
        .windows(2)
        .all(|p| p[1] == p[0] + 1);
    if consecutive && carriers.len() > 1 {
        format!("{}..{}", carriers[0], carriers[carriers.len() - 1])
    } else {
        carriers
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub(crate) fn parse_carriers(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Parameter(format!("cannot parse carrier list '{text}'"));
    let s = text.trim();
    if let Some((a, b)) = s.split_once("..").or_else(|| s.split_once(':')) {
        let lo: usize = a.trim().parse().map_err(|_| bad())?;
        let hi: usize = b.trim().trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect()
}

impl DesignSpec {
    /// Renders the spec as a key = value config block.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ifft_size = {}", self.ifft_size);
        let _ = writeln!(out, "taps = {}", self.taps);
        let _ = writeln!(out, "carriers = {}", format_carriers(&self.carriers));
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "stopband_start = {}", format_angle(self.stopband_start));
        let _ = writeln!(out, "stopband_grid = {}", self.stopband_grid);
        let _ = writeln!(out, "nonneg_grid = {}", self.nonneg_grid);
        out
    }

    /// Parses a key = value config block. Unspecified grid sizes default to
    /// 15 and 16 samples per tap; other keys fall back to the stock spec.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut spec = DesignSpec::default();
        let mut saw_s = false;
        let mut saw_g = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| -> Result<usize> {
                v.parse()
                    .map_err(|_| Error::Config(format!("line {}: bad integer '{v}'", lineno + 1)))
            };
            match key {
                "ifft_size" => spec.ifft_size = int(value)?,
                "taps" => spec.taps = int(value)?,
                "carriers" => spec.carriers = parse_carriers(value)?,
                "lambda" => {
                    spec.lambda = value.parse().map_err(|_| {
                        Error::Config(format!("line {}: bad number '{value}'", lineno + 1))
                    })?
                }
                "stopband_start" => spec.stopband_start = parse_angle(value)?,
                "stopband_grid" => {
                    spec.stopband_grid = int(value)?;
                    saw_s = true;
                }
                "nonneg_grid" => {
                    spec.nonneg_grid = int(value)?;
                    saw_g = true;
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        if !saw_s {
            spec.stopband_grid = 15 * spec.taps;
        }
        if !saw_g {
            spec.nonneg_grid = 16 * spec.taps;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn read_config_file(path: &Path) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_config_file(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_config_string())?)
    }
}
