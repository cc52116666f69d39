//! Dispersion symbol, resonance function and the three-wave identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    /// `u_t + u u_x + alpha u_xxx + beta u_xxxxx = 0`
    Kawahara,
    /// `u_t + u^2 u_x + alpha u_xxx + beta u_xxxxx = 0`
    ModifiedKawahara,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    #[error("beta must be a nonzero finite number, got {0}")]
    ZeroBeta(f64),
    #[error("alpha must be finite, got {0}")]
    BadAlpha(f64),
    #[error("frequencies ({0}, {1}, {2}) do not sum to zero")]
    NotOnHyperplane(f64, f64, f64),
    #[error("n_cap = {n_cap} must be a power of two not below N0 = {n0}")]
    CapBelowThreshold { n_cap: f64, n0: f64 },
    #[error("samples_per_block must be at least 1")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct EquationParams {
    alpha: f64,
    beta: f64,
    kind: EquationKind,
}

#[derive(Deserialize)]
struct RawParams {
    alpha: f64,
    beta: f64,
    kind: EquationKind,
}

impl TryFrom<RawParams> for EquationParams {
    type Error = DispersionError;
    fn try_from(r: RawParams) -> Result<Self, Self::Error> {
        EquationParams::new(r.alpha, r.beta, r.kind)
    }
}

impl EquationParams {
    pub fn new(alpha: f64, beta: f64, kind: EquationKind) -> Result<Self, DispersionError> {
        if !alpha.is_finite() {
            return Err(DispersionError::BadAlpha(alpha));
        }
        if beta == 0.0 || !beta.is_finite() {
            return Err(DispersionError::ZeroBeta(beta));
        }
        Ok(Self { alpha, beta, kind })
    }

    pub fn kawahara(alpha: f64, beta: f64) -> Result<Self, DispersionError> {
        Self::new(alpha, beta, EquationKind::Kawahara)
    }

    pub fn modified(alpha: f64, beta: f64) -> Result<Self, DispersionError> {
        Self::new(alpha, beta, EquationKind::ModifiedKawahara)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: EquationKind) -> Self {
        self.kind = kind;
        self
    }

    #[inline]
    pub fn p(&self, xi: f64) -> f64 {
        symbol_p(xi, self)
    }

    /// Frequency floor above which the fifth-order term dominates the resonance by a factor 2.
    pub fn n0(&self) -> f64 {
        1f64.max(2.0 * (3.0 * self.alpha / (5.0 * self.beta)).abs().sqrt())
    }
}

/// `p(xi) = -beta xi^5 + alpha xi^3`.
#[inline]
pub fn symbol_p(xi: f64, params: &EquationParams) -> f64 {
    let x2 = xi * xi;
    xi * x2 * (params.alpha - params.beta * x2)
}

/// Resonance function on the zero-sum plane, in factored form.
#[inline]
pub fn resonance_h(xi1: f64, xi2: f64, params: &EquationParams) -> f64 {
    let xi3 = -xi1 - xi2;
    let q = xi1 * xi1 + xi1 * xi2 + xi2 * xi2;
    xi1 * xi2 * xi3 * (3.0 * params.alpha - 5.0 * params.beta * q)
}

/// `q(xi, eta)` with `p(eta) + p(xi - eta) = p(xi) + q(xi, eta)`.
#[inline]
pub fn q_shift(xi: f64, eta: f64, params: &EquationParams) -> f64 {
    let c = xi * eta * (xi - eta);
    c * (5.0 * params.beta * (xi * xi - xi * eta + eta * eta) - 3.0 * params.alpha)
}

/// Largest power of two not exceeding `|x|` (block `N <= |x| < 2N`).
pub fn dyadic_floor(x: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() {
        return 0.0;
    }
    let e = a.log2().floor();
    let mut d = 2f64.powf(e);
    if d > a {
        d *= 0.5;
    } else if 2.0 * d <= a {
        d *= 2.0;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTriple {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
}

impl FrequencyTriple {
    pub fn new(xi1: f64, xi2: f64, xi3: f64) -> Result<Self, DispersionError> {
        if (xi1 + xi2 + xi3).abs() > 1e-12 {
            return Err(DispersionError::NotOnHyperplane(xi1, xi2, xi3));
        }
        Ok(Self { xi1, xi2, xi3 })
    }

    pub fn from_pair(xi1: f64, xi2: f64) -> Self {
        Self { xi1, xi2, xi3: -xi1 - xi2 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.xi1, self.xi2, self.xi3]
    }

    pub fn h(&self, params: &EquationParams) -> f64 {
        resonance_h(self.xi1, self.xi2, params)
    }

    /// `(N_max, N_med, N_min)` of the dyadic blocks containing each `|xi_j|`.
    pub fn dyadics(&self) -> (f64, f64, f64) {
        let mut d = self.as_array().map(dyadic_floor);
        d.sort_by(|a, b| b.total_cmp(a));
        (d[0], d[1], d[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationTriple {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl ModulationTriple {
    /// `lambda_j = tau_j - p(xi_j)`.
    pub fn from_taus(xi: &FrequencyTriple, tau: [f64; 3], params: &EquationParams) -> Self {
        Self {
            lambda1: tau[0] - params.p(xi.xi1),
            lambda2: tau[1] - params.p(xi.xi2),
            lambda3: tau[2] - params.p(xi.xi3),
        }
    }

    pub fn sum(&self) -> f64 {
        self.lambda1 + self.lambda2 + self.lambda3
    }
}

/// `|h| / (N_max^4 N_min)` with `N` the dyadic block of each frequency.
pub fn resonance_ratio(t: &FrequencyTriple, params: &EquationParams) -> f64 {
    let (nmax, _, nmin) = t.dyadics();
    t.h(params).abs() / (nmax.powi(4) * nmin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub params: EquationParams,
    pub n_cap: f64,
    pub n0: f64,
    pub min_ratio: f64,
    pub argmin_triple: [f64; 3],
    /// Accepted samples summed over all block patterns.
    pub samples: usize,
    pub samples_per_block: usize,
    pub patterns: usize,
}

/// Smallest dyadic used for the lowest frequency in a scanned pattern.
pub const RESONANCE_SCAN_FLOOR: f64 = 1.0 / 16.0;

/// Dyadic patterns `(N1, N2, N3)` with `N_max ~ N_med`, `N_max` in `[N0, n_cap]`,
/// and a nonempty zero-sum slice.
pub fn resonance_patterns(params: &EquationParams, n_cap: f64) -> Vec<[f64; 3]> {
    let lo_max = 2f64.powf(params.n0().log2().ceil());
    let mut ladder = Vec::new();
    let mut d = RESONANCE_SCAN_FLOOR;
    while d <= n_cap {
        ladder.push(d);
        d *= 2.0;
    }
    let mut out = Vec::new();
    for &a in &ladder {
        for &b in &ladder {
            for &c in &ladder {
                let mut s = [a, b, c];
                s.sort_by(|x, y| y.total_cmp(x));
                if s[0] < lo_max || s[0] > 2.0 * s[1] {
                    continue;
                }
                // |xi_max| < 2 N_max must be reachable as a sum of the other two
                if 2.0 * (s[1] + s[2]) <= s[0] {
                    continue;
                }
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// Draws `samples_per_block` zero-sum triples in every admissible dyadic pattern and
/// reports the smallest `|h| / (N_max^4 N_min)`.
pub fn verify_resonance_bound(
    params: &EquationParams,
    n_cap: f64,
    samples_per_block: usize,
    seed: u64,
) -> Result<ResonanceReport, DispersionError> {
    let n0 = params.n0();
    if !(n_cap >= n0 && n_cap.log2().fract() == 0.0) {
        return Err(DispersionError::CapBelowThreshold { n_cap, n0 });
    }
    if samples_per_block == 0 {
        return Err(DispersionError::NoSamples);
    }
    let patterns = resonance_patterns(params, n_cap);
    let results: Vec<(f64, [f64; 3], usize)> = patterns
        .par_iter()
        .enumerate()
        .map(|(idx, pat)| sample_pattern(params, pat, samples_per_block, stream_seed(seed, &[0x5e50, idx as u64])))
        .collect();
    let mut best = (f64::INFINITY, [0.0; 3]);
    let mut total = 0;
    for (r, t, n) in results {
        total += n;
        if r < best.0 {
            best = (r, t);
        }
    }
    Ok(ResonanceReport {
        params: *params,
        n_cap,
        n0,
        min_ratio: best.0,
        argmin_triple: best.1,
        samples: total,
        samples_per_block,
        patterns: patterns.len(),
    })
}

fn sample_pattern(params: &EquationParams, pat: &[f64; 3], target: usize, seed: u64) -> (f64, [f64; 3], usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // sample the smallest and largest coordinates, solve for the third
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| pat[i].total_cmp(&pat[j]));
    let (i_min, i_mid, i_max) = (order[0], order[1], order[2]);
    let mut best = (f64::INFINITY, [0.0; 3]);
    let mut accepted = 0;
    let mut attempts = 0;
    let max_attempts = 64 * target;
    let nmax = pat[i_max];
    let nmin = pat[i_min];
    let norm = nmax.powi(4) * nmin;
    while accepted < target && attempts < max_attempts {
        attempts += 1;
        let a = signed_annulus(&mut rng, pat[i_min]);
        let c = signed_annulus(&mut rng, pat[i_max]);
        let b = -a - c;
        let m = pat[i_mid];
        if !(b.abs() >= m && b.abs() < 2.0 * m) {
            continue;
        }
        accepted += 1;
        let mut xi = [0.0; 3];
        xi[i_min] = a;
        xi[i_mid] = b;
        xi[i_max] = c;
        let r = resonance_h(xi[0], xi[1], params).abs() / norm;
        if r < best.0 {
            best = (r, xi);
        }
    }
    (best.0, best.1, accepted)
}

fn signed_annulus(rng: &mut ChaCha8Rng, n: f64) -> f64 {
    let x = rng.gen_range(n..2.0 * n);
    if rng.gen::<bool>() {
        x
    } else {
        -x
    }
}

/// Points of the ellipse `xi1^2 + xi1 xi2 + xi2^2 = 3 alpha / (5 beta)` where the
/// non-axis factor of `h` vanishes; empty when the right side is not positive.
pub fn resonance_zero_set(params: &EquationParams, resolution: usize) -> Vec<(f64, f64)> {
    let r2 = 3.0 * params.alpha / (5.0 * params.beta);
    if r2 <= 0.0 || resolution == 0 {
        return Vec::new();
    }
    // with u = (xi1+xi2)/sqrt2, v = (xi1-xi2)/sqrt2 the quadric is 3u^2/2 + v^2/2
    let r = r2.sqrt();
    let s2 = std::f64::consts::SQRT_2;
    (0..resolution)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / resolution as f64;
            let u = r * (2.0f64 / 3.0).sqrt() * th.cos();
            let v = r * s2 * th.sin();
            ((u + v) / s2, (u - v) / s2)
        })
        .collect()
}
