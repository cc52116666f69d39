//! Periodic grids, spectral transforms, Sobolev norms and dealiased products.
//!
//! Coefficients are stored in FFT order: slot `j` holds wavenumber `k = j` for
//! `j < n/2` and `k = j - n` otherwise, so slot `n/2` is the Nyquist mode
//! `k = -n/2`. The normalization is `u_hat(xi_k) = (1/L) * integral of
//! u(x) e^{-i xi_k x}` taken by the trapezoidal rule.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid size {0} is not a power of two >= 8")]
    BadSize(usize),
    #[error("box length must be positive and finite, got {0}")]
    BadBoxLength(f64),
    #[error("field has {got} values but the grid has n = {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("operands live on different grids")]
    GridMismatch,
}

/// Uniform periodic grid on `[0, L)` with the frequency lattice `2 pi k / L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    box_length: f64,
}

pub fn make_grid(n: usize, box_length: f64) -> Result<Grid, SpectralError> {
    Grid::new(n, box_length)
}

impl Grid {
    pub fn new(n: usize, box_length: f64) -> Result<Self, SpectralError> {
        if n < 8 || !n.is_power_of_two() {
            return Err(SpectralError::BadSize(n));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(SpectralError::BadBoxLength(box_length));
        }
        Ok(Self { n, box_length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// Frequency spacing `2 pi / L`.
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    pub fn dx(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Signed wavenumber stored at FFT slot `j`.
    pub fn wavenumber(&self, j: usize) -> i64 {
        fft::signed_index(j, self.n)
    }

    pub fn slot(&self, k: i64) -> Option<usize> {
        fft::fft_slot(k, self.n)
    }

    /// Frequency `xi` of FFT slot `j`.
    pub fn xi(&self, j: usize) -> f64 {
        self.wavenumber(j) as f64 * self.dxi()
    }

    /// FFT slot of the unpaired Nyquist mode.
    pub fn nyquist_slot(&self) -> usize {
        self.n / 2
    }

    /// Frequencies in ascending order, `-n/2 .. n/2-1` times `dxi`.
    pub fn frequencies(&self) -> Vec<f64> {
        let h = (self.n / 2) as i64;
        (-h..h).map(|k| k as f64 * self.dxi()).collect()
    }

    /// Frequencies in FFT slot order.
    pub fn xi_slots(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.xi(j)).collect()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| j as f64 * self.dx()).collect()
    }

    /// Largest `|k|` kept by the 2/3 rule (`3|k| < n`).
    pub fn quadratic_band(&self) -> i64 {
        ((self.n - 1) / 3) as i64
    }

    /// Largest `|k|` kept by the 1/2 rule for cubic products (`4|k| < n`).
    pub fn cubic_band(&self) -> i64 {
        ((self.n - 1) / 4) as i64
    }
}

/// Japanese bracket `<xi> = 1 + |xi|`.
#[inline]
pub fn bracket(xi: f64) -> f64 {
    1.0 + xi.abs()
}

/// Sobolev index `s` and modulation index `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub s: f64,
    pub b: f64,
}

impl NormSpec {
    pub fn new(s: f64, b: f64) -> Self {
        Self { s, b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.len() != grid.n() {
            return Err(SpectralError::LengthMismatch { expected: grid.n(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coeffs.len() != grid.n() {
            return Err(SpectralError::LengthMismatch { expected: grid.n(), got: coeffs.len() });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, coeffs: vec![Complex64::new(0.0, 0.0); grid.n()] }
    }

    /// Field whose coefficient at wavenumber `k` is `f(k)`.
    pub fn from_wavenumbers(grid: Grid, mut f: impl FnMut(i64) -> Complex64) -> Self {
        let coeffs = (0..grid.n()).map(|j| f(grid.wavenumber(j))).collect();
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at signed wavenumber `k` (zero outside the lattice).
    pub fn at(&self, k: i64) -> Complex64 {
        self.grid.slot(k).map_or(Complex64::new(0.0, 0.0), |j| self.coeffs[j])
    }

    pub fn hs_norm(&self, s: f64) -> f64 {
        hs_norm(self, s)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Largest violation of `u(-xi) = conj(u(xi))`, relative to the largest coefficient.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let n = self.grid.n();
        let mut worst = self.coeffs[0].im.abs();
        for j in 1..n {
            if j == self.grid.nyquist_slot() {
                worst = worst.max(self.coeffs[j].im.abs());
                continue;
            }
            worst = worst.max((self.coeffs[j] - self.coeffs[n - j].conj()).norm());
        }
        worst / scale
    }

    /// Projection onto real fields: `(u_k + conj(u_{-k}))/2`, imaginary Nyquist part removed.
    pub fn symmetrized(&self) -> Self {
        let n = self.grid.n();
        let mut coeffs = self.coeffs.clone();
        coeffs[0].im = 0.0;
        let ny = self.grid.nyquist_slot();
        coeffs[ny].im = 0.0;
        for j in 1..ny {
            let a = 0.5 * (self.coeffs[j] + self.coeffs[n - j].conj());
            coeffs[j] = a;
            coeffs[n - j] = a.conj();
        }
        Self { grid: self.grid, coeffs }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { grid: self.grid, coeffs: self.coeffs.iter().map(|c| c * a).collect() }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &SpectralField) -> Result<Self, SpectralError> {
        same_grid(&self.grid, &other.grid)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| x + y * a).collect();
        Ok(Self { grid: self.grid, coeffs })
    }

    /// Spatial translation `u(x - a)`.
    pub fn translated(&self, a: f64) -> Self {
        let coeffs = (0..self.grid.n())
            .map(|j| self.coeffs[j] * Complex64::from_polar(1.0, -self.grid.xi(j) * a))
            .collect();
        Self { grid: self.grid, coeffs }
    }

    /// Spectral derivative `d/dx`; the Nyquist mode is dropped.
    pub fn derivative(&self) -> Self {
        let ny = self.grid.nyquist_slot();
        let coeffs = (0..self.grid.n())
            .map(|j| if j == ny { Complex64::new(0.0, 0.0) } else { self.coeffs[j] * Complex64::new(0.0, self.grid.xi(j)) })
            .collect();
        Self { grid: self.grid, coeffs }
    }

    /// `L * sum |u_k - v_k|^2 <xi>^{2s}`, square-rooted.
    pub fn hs_distance(&self, other: &SpectralField, s: f64) -> Result<f64, SpectralError> {
        same_grid(&self.grid, &other.grid)?;
        let mut acc = 0.0;
        for j in 0..self.grid.n() {
            acc += bracket(self.grid.xi(j)).powf(2.0 * s) * (self.coeffs[j] - other.coeffs[j]).norm_sqr();
        }
        Ok((self.grid.box_length() * acc).sqrt())
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> Result<(), SpectralError> {
    if a == b {
        Ok(())
    } else {
        Err(SpectralError::GridMismatch)
    }
}

pub fn to_spectral(field: &RealField) -> SpectralField {
    let n = field.grid.n();
    let mut buf: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::forward(&mut buf);
    let inv = 1.0 / n as f64;
    for c in &mut buf {
        *c *= inv;
    }
    SpectralField { grid: field.grid, coeffs: buf }
}

/// Physical values; the imaginary part of a non-symmetric input is discarded.
pub fn to_physical(field: &SpectralField) -> RealField {
    let buf = physical_complex(field);
    RealField { grid: field.grid, values: buf.into_iter().map(|c| c.re).collect() }
}

pub(crate) fn physical_complex(field: &SpectralField) -> Vec<Complex64> {
    let mut buf = field.coeffs.clone();
    fft::inverse(&mut buf);
    buf
}

pub fn hs_norm(field: &SpectralField, s: f64) -> f64 {
    let g = &field.grid;
    let mut acc = 0.0;
    for (j, c) in field.coeffs.iter().enumerate() {
        let w = if s == 0.0 { 1.0 } else { bracket(g.xi(j)).powf(2.0 * s) };
        acc += w * c.norm_sqr();
    }
    (g.box_length() * acc).sqrt()
}

fn truncate(coeffs: &mut [Complex64], grid: &Grid, band: i64) {
    for (j, c) in coeffs.iter_mut().enumerate() {
        if grid.wavenumber(j).abs() > band {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// Pointwise product of two (or three) fields with alias-free retained modes.
///
/// Quadratic products keep `3|k| < n`, cubic products keep `4|k| < n`; the
/// inputs are truncated to the same band first, so retained output modes are
/// exact. The Nyquist mode is always zero on output.
pub fn dealiased_product(
    a: &SpectralField,
    b: &SpectralField,
    c: Option<&SpectralField>,
) -> Result<SpectralField, SpectralError> {
    same_grid(&a.grid, &b.grid)?;
    if let Some(c) = c {
        same_grid(&a.grid, &c.grid)?;
    }
    let grid = a.grid;
    let band = if c.is_some() { grid.cubic_band() } else { grid.quadratic_band() };
    let phys = |f: &SpectralField| {
        let mut buf = f.coeffs.clone();
        truncate(&mut buf, &grid, band);
        fft::inverse(&mut buf);
        buf
    };
    let mut out = phys(a);
    let pb = if std::ptr::eq(a, b) { out.clone() } else { phys(b) };
    for (x, y) in out.iter_mut().zip(&pb) {
        *x *= y;
    }
    if let Some(c) = c {
        let pc = phys(c);
        for (x, y) in out.iter_mut().zip(&pc) {
            *x *= y;
        }
    }
    fft::forward(&mut out);
    let inv = 1.0 / grid.n() as f64;
    for v in &mut out {
        *v *= inv;
    }
    truncate(&mut out, &grid, band);
    out[grid.nyquist_slot()] = Complex64::new(0.0, 0.0);
    Ok(SpectralField { grid, coeffs: out })
}
