//! FIR filters and the conversion between taps and autocorrelation,
//! including minimum-phase recovery from a nonnegative power response.
//!
//! The factorization is root-based: the symmetric autocorrelation defines a
//! palindromic polynomial whose roots come in reciprocal pairs; keeping the
//! member of each pair inside the unit circle rebuilds a minimum-phase
//! filter, and the overall gain is fixed by the zero-lag term.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::design::{power_vector, shift_carriers, Autocorrelation, DesignSpec};
use crate::error::{Error, Result};
use crate::numerics::{poly_roots, Polynomial};

/// Verification grid density for nonnegativity checks.
const CHECK_GRID: usize = 1 << 14;
/// Roots with ||z| - 1| below this are treated as on-circle double roots.
const CIRCLE_BAND: f64 = 1e-6;
/// Relative tolerance for matching reciprocal root pairs.
const PAIRING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Designed { lambda: f64 },
    DolphChebyshev { attenuation_db: f64 },
    Identity,
    External,
}

/// Real FIR filter f_0..f_{N-1} with nonzero first and last taps and the
/// sign convention f_0 > 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    f: Vec<f64>,
    pub provenance: Provenance,
}

impl FirFilter {
    pub fn new(mut f: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if f.is_empty() {
            return Err(Error::Parameter("filter must have at least one tap".into()));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("filter taps must be finite".into()));
        }
        if f[0] == 0.0 || *f.last().unwrap() == 0.0 {
            return Err(Error::Parameter(
                "first and last taps must be nonzero".into(),
            ));
        }
        if f[0] < 0.0 {
            for v in &mut f {
                *v = -*v;
            }
        }
        Ok(FirFilter { f, provenance })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.f
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor guarantees at least one tap
    }

    /// Frequency response F(omega) = sum f_n exp(-j omega n).
    pub fn frequency_response(&self, omega: f64) -> Complex64 {
        self.f
            .iter()
            .enumerate()
            .map(|(n, fn_)| fn_ * Complex64::from_polar(1.0, -omega * n as f64))
            .sum()
    }

    /// |F(omega)|^2.
    pub fn power_response(&self, omega: f64) -> f64 {
        self.frequency_response(omega).norm_sqr()
    }
}

/// g_n = sum_m f_{n+m} f_m for n = 0..N-1; F_g(omega) = |F(omega)|^2.
/// The design context is copied from `spec`.
pub fn autocorrelation(filter: &FirFilter, spec: &DesignSpec) -> Autocorrelation {
    Autocorrelation {
        g: autocorrelation_seq(filter.coefficients()),
        ifft_size: spec.ifft_size,
        carriers: spec.carriers.clone(),
    }
}

pub fn autocorrelation_seq(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|lag| (0..n - lag).map(|m| f[lag + m] * f[m]).sum())
        .collect()
}

/// Recovers the minimum-phase filter whose autocorrelation is g, up to the
/// stated round-trip tolerance. Requires F_g >= -tol * g_0 on a dense grid;
/// callers holding a slightly negative spectrum should repair first.
pub fn factorize(g: &Autocorrelation, tol: f64) -> Result<FirFilter> {
    let original = &g.g;
    if original.is_empty() {
        return Err(Error::Parameter("autocorrelation must be nonempty".into()));
    }
    if original.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("autocorrelation must be finite".into()));
    }
    let g0 = original[0];
    if !(g0 > 0.0) {
        return Err(Error::Factorization(
            "zero-lag autocorrelation must be positive".into(),
        ));
    }
    let floor = g.grid_minimum(CHECK_GRID);
    if floor < -tol * g0 {
        return Err(Error::Factorization(format!(
            "power response reaches {floor:.3e} (below -tol*g_0 = {:.3e}); \
             repair nonnegativity before factorizing",
            -tol * g0
        )));
    }

    // Trailing zero lags correspond to a shorter filter.
    let mut gv = original.clone();
    while gv.len() > 1 && *gv.last().unwrap() == 0.0 {
        gv.pop();
    }
    let n = gv.len();

    let filter = if n == 1 {
        FirFilter::new(vec![g0.sqrt()], Provenance::External)?
    } else {
        // palindromic coefficients g_{N-1}..g_1, g_0, g_1..g_{N-1}
        let mut coeffs: Vec<Complex64> =
            gv.iter().skip(1).rev().map(|v| Complex64::new(*v, 0.0)).collect();
        coeffs.extend(gv.iter().map(|v| Complex64::new(*v, 0.0)));
        let roots = poly_roots(&Polynomial::new(coeffs)?)?;
        let kept = select_minimum_phase_roots(&roots)?;
        if kept.len() != n - 1 {
            return Err(Error::Factorization(format!(
                "expected {} minimum-phase roots, found {}",
                n - 1,
                kept.len()
            )));
        }
        let monic = Polynomial::from_roots(&kept);
        // descending coefficients of prod (z - r) give f up to gain
        let shape: Vec<Complex64> = monic.coeffs().iter().rev().copied().collect();
        let worst_imag = shape.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        let scale = shape.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if worst_imag > 1e-6 * scale {
            return Err(Error::Factorization(
                "selected root set is not conjugate-closed".into(),
            ));
        }
        let shape: Vec<f64> = shape.iter().map(|c| c.re).collect();
        let gamma = (g0 / shape.iter().map(|v| v * v).sum::<f64>()).sqrt();
        FirFilter::new(shape.iter().map(|v| gamma * v).collect(), Provenance::External)?
    };

    // Internal consistency: the rebuilt filter must reproduce g.
    let mut round_trip = autocorrelation_seq(filter.coefficients());
    round_trip.resize(original.len(), 0.0);
    let worst = round_trip
        .iter()
        .zip(original)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if worst > 1e-8 * g0 {
        return Err(Error::Factorization(format!(
            "round-trip autocorrelation error {worst:.3e} exceeds 1e-8 * g_0"
        )));
    }
    Ok(filter)
}

/// Splits the palindromic root set into the minimum-phase half: strictly
/// inside roots are kept and matched against their reciprocals outside; near
/// unit-circle roots are treated as on-circle double roots and contribute
/// one representative per pair.
fn select_minimum_phase_roots(roots: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    let mut circle = Vec::new();
    for z in roots {
        let d = z.norm() - 1.0;
        if d.abs() < CIRCLE_BAND {
            circle.push(*z);
        } else if d < 0.0 {
            inside.push(*z);
        } else {
            outside.push(*z);
        }
    }
    if inside.len() != outside.len() || circle.len() % 2 != 0 {
        return Err(Error::Factorization(format!(
            "root set does not split into reciprocal pairs \
             ({} inside, {} outside, {} near the circle)",
            inside.len(),
            outside.len(),
            circle.len()
        )));
    }
    // each inside root must have a reciprocal partner outside
    let mut used = vec![false; outside.len()];
    for z in &inside {
        let want = z.inv();
        let found = outside.iter().enumerate().find(|(i, u)| {
            !used[*i] && (*u - want).norm() <= PAIRING_TOL * want.norm()
        });
        match found {
            Some((i, _)) => used[i] = true,
            None => {
                return Err(Error::Factorization(format!(
                    "no reciprocal partner for root {z} within relative tolerance {PAIRING_TOL}"
                )))
            }
        }
    }
    let mut kept = inside;
    if !circle.is_empty() {
        log::warn!(
            "{} roots within {CIRCLE_BAND} of the unit circle; treating as \
             on-circle double roots and splitting evenly",
            circle.len()
        );
        // greedy nearest-neighbor pairing, one representative per pair
        let mut pool = circle;
        while let Some(z) = pool.pop() {
            let (idx, _) = pool
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| (*a - z).norm().total_cmp(&(*b - z).norm()))
                .ok_or_else(|| {
                    Error::Factorization("unpaired root on the unit circle".into())
                })?;
            let partner = pool.swap_remove(idx);
            let mid = (z.arg() + partner.arg()) / 2.0;
            // representative projected onto the circle
            let rep = if (z.arg() - partner.arg()).abs() > std::f64::consts::PI {
                // the pair straddles the branch cut at angle pi
                Complex64::from_polar(1.0, mid + std::f64::consts::PI)
            } else {
                Complex64::from_polar(1.0, mid)
            };
            kept.push(rep);
        }
    }
    Ok(kept)
}

/// Lifts F_g to be nonnegative on a dense grid by raising the zero lag, then
/// rescales so the power conservation equality holds exactly again. Returns
/// the input unchanged when the response is already nonnegative.
pub fn repair_nonnegativity(g: &Autocorrelation, spec: &DesignSpec) -> Result<Autocorrelation> {
    let floor = g.grid_minimum(CHECK_GRID);
    if floor >= 0.0 {
        return Ok(g.clone());
    }
    let delta = -floor;
    log::info!("raising zero lag by {:.3e} to restore nonnegativity", delta * 1.001);
    let mut lifted = g.g.clone();
    lifted[0] += delta * (1.0 + 1e-3);

    let carriers = shift_carriers(spec)?;
    let b = power_vector(spec, &carriers)?;
    let target = (spec.num_carriers() * (spec.ifft_size + spec.taps - 1)) as f64;
    let actual: f64 = b.iter().zip(&lifted).map(|(bi, gi)| bi * gi).sum();
    if !(actual > 0.0) {
        return Err(Error::Factorization(
            "repaired autocorrelation has nonpositive conserved power".into(),
        ));
    }
    let scale = target / actual;
    for v in &mut lifted {
        *v *= scale;
    }
    Ok(Autocorrelation {
        g: lifted,
        ifft_size: spec.ifft_size,
        carriers: spec.carriers.clone(),
    })
}

/// On-disk form of a filter: design context plus taps and autocorrelation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    #[serde(rename = "M")]
    pub ifft_size: usize,
    #[serde(rename = "N")]
    pub taps: usize,
    pub carriers: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    pub coefficients: Vec<f64>,
    pub g: Vec<f64>,
    pub provenance: Provenance,
    pub created_by_version: String,
}

impl FilterRecord {
    pub fn new(filter: &FirFilter, spec: &DesignSpec) -> Self {
        let lambda = match filter.provenance {
            Provenance::Designed { lambda } => Some(lambda),
            _ => None,
        };
        FilterRecord {
            ifft_size: spec.ifft_size,
            taps: filter.len(),
            carriers: spec.carriers.clone(),
            lambda,
            coefficients: filter.coefficients().to_vec(),
            g: autocorrelation_seq(filter.coefficients()),
            provenance: filter.provenance.clone(),
            created_by_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn filter(&self) -> Result<FirFilter> {
        if self.coefficients.len() != self.taps {
            return Err(Error::Parameter(format!(
                "record claims {} taps but carries {} coefficients",
                self.taps,
                self.coefficients.len()
            )));
        }
        FirFilter::new(self.coefficients.clone(), self.provenance.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(std::fs::write(path, text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
