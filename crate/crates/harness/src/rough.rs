//! Randomized rough initial data.

use std::f64::consts::TAU;

use kawahara_core::rng::stream_rng;
use kawahara_core::spectral::bracket;
use kawahara_core::{Grid, SpectralField};
use num_complex::Complex64;
use rand::Rng;

/// Real datum with `|u_hat(xi)| ~ <xi>^{-s-1/2}` on `0 < |xi| <= cutoff`, uniform random
/// phases, normalized to `||u0||_{H^norm_s} = 1`.
///
/// Modes beyond the quadratic dealiasing band are dropped. Returns the zero field when
/// no mode survives.
pub fn rough_datum(grid: Grid, s: f64, norm_s: f64, cutoff: f64, seed: u64) -> SpectralField {
    let mut rng = stream_rng(seed, &[]);
    let band = grid.quadratic_band();
    let mut f = SpectralField::zeros(grid);
    for k in 1..=band {
        let xi = k as f64 * grid.dxi();
        let theta = rng.gen_range(0.0..TAU);
        if xi > cutoff {
            continue;
        }
        let z = Complex64::from_polar(bracket(xi).powf(-s - 0.5), theta);
        f.coeffs_mut()[grid.slot(k).unwrap()] = z;
        f.coeffs_mut()[grid.slot(-k).unwrap()] = z.conj();
    }
    let n = f.hs_norm(norm_s);
    if n == 0.0 {
        return f;
    }
    f.scaled(1.0 / n)
}
