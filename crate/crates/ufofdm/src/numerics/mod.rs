//! Shared numerical kernels: transforms, polynomial roots, special functions.

mod fft;
mod poly;
mod special;

pub use fft::{dft, idft};
pub use poly::{poly_roots, Polynomial};
pub use special::{erfc, q_function};
