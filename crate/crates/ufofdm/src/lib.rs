//! Design of side-lobe-suppressing FIR filters for UF-OFDM, plus the
//! simulation machinery to evaluate them.
//!
//! The design path minimizes the worst-case stopband power of the filtered
//! multicarrier spectrum in the filter's autocorrelation variable, where the
//! problem is a linear program. The filter itself is recovered afterwards by
//! minimum-phase spectral factorization. Everything needed to run that
//! pipeline lives here: a dense interior-point LP solver, a radix-2 FFT, a
//! polynomial root finder, the Dolph-Chebyshev baseline, the zero-padded
//! QPSK transmission chain with a zero-forcing receiver, and Monte Carlo
//! drivers for power-spectrum, BER, and PAPR measurements.

pub mod analysis;
pub mod chain;
pub mod design;
pub mod error;
pub mod fir;
pub mod lp;
pub mod numerics;
pub mod seeding;
pub mod windows;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
