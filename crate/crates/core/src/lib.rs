//! Numerical laboratory for the Kawahara and modified Kawahara equations
//!
//! `u_t + u u_x + alpha u_xxx + beta u_xxxxx = 0` (and `u^2 u_x` in place of
//! `u u_x`) on a periodic box: a pseudospectral solver, the Duhamel/Picard
//! construction in discrete Bourgain spaces, and numerical checks of the
//! resonance, block and multilinear estimates.

pub mod blocks;
pub mod cellkernel;
pub mod dispersion;
pub mod duhamel;
mod fft;
pub mod fit;
pub mod propagator;
pub mod rng;
pub mod snapshot;
pub mod spectral;
pub mod xsb;

pub use dispersion::{EquationKind, EquationParams};
pub use propagator::Trajectory;
pub use spectral::{Grid, NormSpec, RealField, SpectralField};
