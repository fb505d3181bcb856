//! Polynomial container and a simultaneous-iteration (Aberth) root finder.
//!
//! The root finder is deterministic: fixed initial points on a circle whose
//! radius comes from the coefficient magnitudes, Gauss-Seidel style updates,
//! at most 500 sweeps. A root is accepted when its update drops below 1e-12
//! (relative) or its residual reaches the evaluation noise floor; the second
//! clause is what lets clustered/multiple roots terminate, since their
//! updates stall near sqrt(machine epsilon).

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 500;
const UPDATE_TOL: f64 = 1e-12;

/// Dense polynomial, coefficients in ascending degree order.
#[derive(Debug, Clone)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    /// Builds from ascending coefficients, trimming exactly-zero leading terms.
    pub fn new(mut coeffs: Vec<Complex64>) -> Result<Self> {
        while coeffs.len() > 1 && coeffs.last() == Some(&Complex64::ZERO) {
            coeffs.pop();
        }
        if coeffs.is_empty() || coeffs.iter().all(|c| *c == Complex64::ZERO) {
            return Err(Error::Parameter("zero polynomial".into()));
        }
        if coeffs
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::Parameter("non-finite polynomial coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn from_real(coeffs: &[f64]) -> Result<Self> {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// Monic polynomial with the given roots.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut coeffs = vec![Complex64::ONE];
        for &r in roots {
            let mut next = vec![Complex64::ZERO; coeffs.len() + 1];
            for (i, &c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= r * c;
            }
            coeffs = next;
        }
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Horner evaluation.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial {
                coeffs: vec![Complex64::ZERO],
            };
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| c * i as f64)
            .collect();
        Polynomial { coeffs }
    }

    /// Scale of |p| at |z|: sum |a_i| |z|^i, used for backward-error floors.
    fn magnitude_at(&self, zabs: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * zabs + c.norm();
        }
        acc
    }
}

/// All complex roots with multiplicity.
pub fn poly_roots(p: &Polynomial) -> Result<Vec<Complex64>> {
    if p.degree() == 0 {
        return Err(Error::Parameter(
            "root finding needs degree >= 1".into(),
        ));
    }
    // Peel off roots at the origin so the initial radius below is defined.
    let zeros_at_origin = p
        .coeffs
        .iter()
        .take_while(|c| **c == Complex64::ZERO)
        .count();
    let mut roots = vec![Complex64::ZERO; zeros_at_origin];
    let reduced = Polynomial {
        coeffs: p.coeffs[zeros_at_origin..].to_vec(),
    };
    if reduced.degree() == 0 {
        return Ok(roots);
    }
    roots.extend(aberth(&reduced)?);
    Ok(roots)
}

fn aberth(p: &Polynomial) -> Result<Vec<Complex64>> {
    let deg = p.degree();
    let lead = p.coeffs[deg];
    if deg == 1 {
        return Ok(vec![-p.coeffs[0] / lead]);
    }
    let dp = p.derivative();

    // Geometric-mean radius |a_0 / a_deg|^(1/deg): exact for root sets that
    // are symmetric under reciprocation, close enough otherwise. The angular
    // offsets break any coefficient symmetry of the polynomial itself.
    let radius = (p.coeffs[0].norm() / lead.norm()).powf(1.0 / deg as f64);
    let radius = if radius.is_finite() && radius > 0.0 {
        radius
    } else {
        1.0
    };
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| Complex64::from_polar(radius, TAU * (k as f64 + 0.35) / deg as f64 + 0.41))
        .collect();
    let mut frozen = vec![false; deg];

    for _ in 0..MAX_SWEEPS {
        let mut all_frozen = true;
        for k in 0..deg {
            if frozen[k] {
                continue;
            }
            let pz = p.eval(z[k]);
            let noise_floor = 8.0 * deg as f64 * f64::EPSILON * p.magnitude_at(z[k].norm());
            if pz.norm() <= noise_floor {
                frozen[k] = true;
                continue;
            }
            let dpz = dp.eval(z[k]);
            let ratio = if dpz == Complex64::ZERO {
                // Stationary point that is not a root: nudge off it.
                z[k] *= 1.0 + 1e-6;
                all_frozen = false;
                continue;
            } else {
                pz / dpz
            };
            let mut repulsion = Complex64::ZERO;
            for j in 0..deg {
                if j != k {
                    let diff = z[k] - z[j];
                    if diff != Complex64::ZERO {
                        repulsion += diff.inv();
                    }
                }
            }
            let denom = Complex64::ONE - ratio * repulsion;
            let step = if denom.norm() < 1e-300 {
                ratio
            } else {
                ratio / denom
            };
            z[k] -= step;
            if step.norm() <= UPDATE_TOL * (1.0 + z[k].norm()) {
                frozen[k] = true;
            } else {
                all_frozen = false;
            }
        }
        if all_frozen {
            return Ok(z);
        }
    }
    Err(Error::NoConvergence(format!(
        "root finder did not settle within {MAX_SWEEPS} sweeps (degree {deg})"
    )))
}
