//! Time cutoff, the Duhamel map, Picard iteration and its diagnostics.
//!
//! Trajectories used here live on the symmetric lattice `t_j = (j - J) delta / J`,
//! `j = 0..=2J`, so `t = 0` is a lattice point and the cutoff support `[-delta, delta]`
//! is covered exactly.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::EquationParams;
use crate::propagator::{linear_flow, nonlinear_term, phases, PropagatorError, Trajectory};
use crate::rng::stream_rng;
use crate::spectral::{NormSpec, SpectralField};
use crate::xsb::{spacetime_spectrum, xsb_norm, XsbError, DEFAULT_PAD};

/// Default number of lattice intervals per half window.
pub const DEFAULT_HALF_POINTS: usize = 128;
/// Minimum number of lattice points strictly inside the cutoff support.
pub const MIN_SUPPORT_POINTS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DuhamelError {
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    Xsb(#[from] XsbError),
    #[error("cutoff scale delta must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("time lattice is not uniform")]
    NonUniform,
    #[error("time lattice must contain t = 0 and cover [-delta, delta]")]
    BadSupport,
    #[error("only {found} lattice points inside the cutoff support, need at least {MIN_SUPPORT_POINTS}")]
    TooCoarse { found: usize },
    #[error("Picard iteration diverged at iteration {iteration} (residual {residual:e})")]
    Divergence { iteration: usize, residual: f64 },
    #[error("k_max must be at least 2")]
    BadIterationCap,
    #[error("probe count must be at least 2")]
    TooFewProbes,
}

fn g_pos(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth even bump: 1 on `|t| <= 1/2`, 0 on `|t| >= 1`.
pub fn bump_psi(t: f64) -> f64 {
    let a = t.abs();
    if a <= 0.5 {
        return 1.0;
    }
    if a >= 1.0 {
        return 0.0;
    }
    let up = g_pos(2.0 - 2.0 * a);
    up / (up + g_pos(2.0 * a - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    delta: f64,
}

impl CutoffSpec {
    pub fn new(delta: f64) -> Result<Self, DuhamelError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(DuhamelError::BadDelta(delta));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `psi(t / delta)`.
    pub fn psi(&self, t: f64) -> f64 {
        bump_psi(t / self.delta)
    }

    /// Symmetric lattice with `half` intervals on each side of `t = 0`.
    pub fn lattice(&self, half: usize) -> Vec<f64> {
        let h = half as i64;
        (-h..=h).map(|j| j as f64 * self.delta / half as f64).collect()
    }
}

/// Lattice geometry of a trajectory already checked for use with a cutoff.
#[derive(Debug, Clone, Copy)]
struct LatticeInfo {
    dt: f64,
    zero: usize,
}

fn check_lattice(times: &[f64], cutoff: &CutoffSpec) -> Result<LatticeInfo, DuhamelError> {
    if times.len() < 4 {
        return Err(DuhamelError::TooCoarse { found: times.len() });
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (j, t) in times.iter().enumerate() {
        if (t - (times[0] + j as f64 * dt)).abs() > 1e-9 * dt {
            return Err(DuhamelError::NonUniform);
        }
    }
    let d = cutoff.delta();
    if times[0] > -d * (1.0 - 1e-12) || times[times.len() - 1] < d * (1.0 - 1e-12) {
        return Err(DuhamelError::BadSupport);
    }
    let zero = times.iter().position(|t| t.abs() < 1e-9 * dt).ok_or(DuhamelError::BadSupport)?;
    let inside = times.iter().filter(|t| t.abs() < d).count();
    if inside < MIN_SUPPORT_POINTS {
        return Err(DuhamelError::TooCoarse { found: inside });
    }
    Ok(LatticeInfo { dt, zero })
}

/// `int_{t_i}^{t_{i+1}} f` from four neighbouring samples (exact for cubics).
fn interval_weights(i: usize, m: usize) -> (usize, [f64; 4]) {
    if i >= 1 && i + 2 < m {
        (i - 1, [-1.0, 13.0, 13.0, -1.0])
    } else if i == 0 {
        (0, [9.0, 19.0, -5.0, 1.0])
    } else {
        (i - 2, [1.0, -5.0, 19.0, 9.0])
    }
}

/// Cumulative integral `I_j = int_0^{t_j} f` on a uniform lattice with `t_zero = 0`.
fn cumulative_from_zero(f: &[Vec<Complex64>], dt: f64, zero: usize) -> Vec<Vec<Complex64>> {
    let m = f.len();
    let n = f[0].len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; m];
    let step = |i: usize| -> Vec<Complex64> {
        let (base, w) = interval_weights(i, m);
        (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (q, wq) in w.iter().enumerate() {
                    acc += f[base + q][k] * *wq;
                }
                acc * (dt / 24.0)
            })
            .collect()
    };
    for i in zero..m - 1 {
        let inc = step(i);
        let next: Vec<Complex64> = out[i].iter().zip(&inc).map(|(a, b)| a + b).collect();
        out[i + 1] = next;
    }
    for i in (0..zero).rev() {
        let inc = step(i);
        let prev: Vec<Complex64> = out[i + 1].iter().zip(&inc).map(|(a, b)| a - b).collect();
        out[i] = prev;
    }
    out
}

/// `psi(t/delta) int_0^t W(t - t') F(t') dt'` for a forcing sampled on the cutoff lattice.
pub fn cutoff_duhamel_integral(forcing: &Trajectory, cutoff: &CutoffSpec) -> Result<Trajectory, DuhamelError> {
    let info = check_lattice(forcing.times(), cutoff)?;
    let params = *forcing.params();
    let grid = *forcing.grid();
    let pulled: Vec<Vec<Complex64>> = forcing
        .times()
        .iter()
        .zip(forcing.states())
        .map(|(&t, s)| linear_flow(s, -t, &params).into_coeffs())
        .collect();
    let acc = cumulative_from_zero(&pulled, info.dt, info.zero);
    let states = forcing
        .times()
        .iter()
        .zip(acc)
        .map(|(&t, a)| {
            let chi = cutoff.psi(t);
            let ph = phases(&grid, t, &params);
            SpectralField::new(grid, a.iter().zip(&ph).map(|(x, e)| x * e * chi).collect())
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(PropagatorError::from)?;
    Ok(Trajectory::new(forcing.times().to_vec(), states, params)?)
}

/// `T(u)(t) = psi(t/delta) [W(t) u0 - int_0^t W(t - t') N(u(t')) dt']`, where
/// `N(u) = u u_x` (or `u^2 u_x`); the integral is a fourth-order quadrature of the
/// interaction-frame integrand `W(-t') N(u(t'))`.
pub fn duhamel_map(
    u: &Trajectory,
    u0: &SpectralField,
    cutoff: &CutoffSpec,
    params: &EquationParams,
) -> Result<Trajectory, DuhamelError> {
    let info = check_lattice(u.times(), cutoff)?;
    let grid = *u0.grid();
    crate::spectral::same_grid(&grid, u.grid()).map_err(PropagatorError::from)?;
    // nonlinear_term returns -N(u)
    let pulled: Vec<Vec<Complex64>> = u
        .times()
        .iter()
        .zip(u.states())
        .map(|(&t, s)| {
            if s.is_zero() {
                vec![Complex64::new(0.0, 0.0); grid.n()]
            } else {
                linear_flow(&nonlinear_term(s, params), -t, params).into_coeffs()
            }
        })
        .collect();
    let acc = cumulative_from_zero(&pulled, info.dt, info.zero);
    let states = u
        .times()
        .iter()
        .zip(acc)
        .map(|(&t, a)| {
            let chi = cutoff.psi(t);
            let ph = phases(&grid, t, params);
            let coeffs = (0..grid.n()).map(|k| (u0.coeffs()[k] + a[k]) * ph[k] * chi).collect();
            SpectralField::new(grid, coeffs)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(PropagatorError::from)?;
    Ok(Trajectory::new(u.times().to_vec(), states, *params)?)
}

/// `psi(t/delta) W(t) u0` on the cutoff lattice.
pub fn free_solution(u0: &SpectralField, cutoff: &CutoffSpec, params: &EquationParams, half: usize) -> Result<Trajectory, DuhamelError> {
    let times = cutoff.lattice(half);
    let states = times.iter().map(|&t| linear_flow(u0, t, params).scaled(cutoff.psi(t))).collect();
    Ok(Trajectory::new(times, states, *params)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    /// `||u^(k) - u^(k-1)||_{X_{s,b}}` for `k = 1, 2, ...`
    pub residuals: Vec<f64>,
    pub contraction_factor: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub half_points: usize,
    /// Time-window zero padding used for the discrete `X_{s,b}` norm.
    pub pad: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { half_points: DEFAULT_HALF_POINTS, pad: DEFAULT_PAD }
    }
}

/// Discrete `X_{s,b}` norm of a trajectory supported in the cutoff window.
pub fn trajectory_xsb_norm(traj: &Trajectory, norm: &NormSpec, pad: usize) -> Result<f64, DuhamelError> {
    let f = spacetime_spectrum(traj, None, pad)?;
    Ok(xsb_norm(&f, norm))
}

/// Largest successive residual ratio, ignoring residuals at rounding level.
fn decay_ratio(res: &[f64]) -> f64 {
    let Some(&first) = res.first() else { return 0.0 };
    if first == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for w in res.windows(2) {
        if w[0] > 1e-11 * first {
            worst = worst.max(w[1] / w[0]);
        }
    }
    worst
}

pub fn picard_iterate(
    u0: &SpectralField,
    cutoff: &CutoffSpec,
    params: &EquationParams,
    norm: &NormSpec,
    k_max: usize,
    tol: f64,
) -> Result<(Trajectory, FixedPointReport), DuhamelError> {
    picard_iterate_with(u0, cutoff, params, norm, k_max, tol, &PicardOptions::default())
}

pub fn picard_iterate_with(
    u0: &SpectralField,
    cutoff: &CutoffSpec,
    params: &EquationParams,
    norm: &NormSpec,
    k_max: usize,
    tol: f64,
    opts: &PicardOptions,
) -> Result<(Trajectory, FixedPointReport), DuhamelError> {
    if k_max < 2 {
        return Err(DuhamelError::BadIterationCap);
    }
    let times = cutoff.lattice(opts.half_points);
    let mut u = Trajectory::zeros(*u0.grid(), times, *params)?;
    let mut residuals: Vec<f64> = Vec::new();
    let mut rises = 0;
    for k in 1..=k_max {
        let next = duhamel_map(&u, u0, cutoff, params)?;
        let r = trajectory_xsb_norm(&next.axpy(-1.0, &u)?, norm, opts.pad)?;
        if !r.is_finite() {
            return Err(DuhamelError::Divergence { iteration: k, residual: r });
        }
        if let Some(&prev) = residuals.last() {
            rises = if r > prev { rises + 1 } else { 0 };
        }
        residuals.push(r);
        u = next;
        if rises >= 3 {
            return Err(DuhamelError::Divergence { iteration: k, residual: r });
        }
        if r < tol {
            let report = FixedPointReport { contraction_factor: decay_ratio(&residuals), residuals, converged: true, iterations: k };
            return Ok((u, report));
        }
    }
    let report = FixedPointReport { contraction_factor: decay_ratio(&residuals), residuals, converged: false, iterations: k_max };
    Ok((u, report))
}

/// Random real field with the spectral envelope `|u0_hat|` and independent phases.
fn envelope_field(u0: &SpectralField, rng: &mut impl Rng) -> SpectralField {
    let g = *u0.grid();
    let mut f = SpectralField::zeros(g);
    let half = (g.n() / 2) as i64;
    for k in 0..half {
        let amp = 0.5 * (u0.at(k).norm() + u0.at(-k).norm());
        let z = if k == 0 {
            Complex64::new(amp * if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0)
        } else {
            Complex64::from_polar(amp * rng.gen_range(0.5..1.5), rng.gen_range(0.0..std::f64::consts::TAU))
        };
        f.coeffs_mut()[g.slot(k).unwrap()] = z;
        if k > 0 {
            f.coeffs_mut()[g.slot(-k).unwrap()] = z.conj();
        }
    }
    f
}

/// Max of `||T(u) - T(v)|| / ||u - v||` over pairs of random probes on the sphere of
/// radius `2 ||psi_delta W u0||_{X_{s,b}}` (the calibrated ball radius).
pub fn contraction_factor(
    u0: &SpectralField,
    cutoff: &CutoffSpec,
    params: &EquationParams,
    norm: &NormSpec,
    probes: usize,
    seed: u64,
) -> Result<f64, DuhamelError> {
    contraction_factor_with(u0, cutoff, params, norm, probes, seed, &PicardOptions::default())
}

pub fn contraction_factor_with(
    u0: &SpectralField,
    cutoff: &CutoffSpec,
    params: &EquationParams,
    norm: &NormSpec,
    probes: usize,
    seed: u64,
    opts: &PicardOptions,
) -> Result<f64, DuhamelError> {
    if probes < 2 {
        return Err(DuhamelError::TooFewProbes);
    }
    let free = free_solution(u0, cutoff, params, opts.half_points)?;
    let radius = 2.0 * trajectory_xsb_norm(&free, norm, opts.pad)?;
    if radius == 0.0 {
        return Ok(0.0);
    }
    let times = cutoff.lattice(opts.half_points);
    let mut images = Vec::with_capacity(probes);
    let mut members = Vec::with_capacity(probes);
    for i in 0..probes {
        let mut rng = stream_rng(seed, &[0xc0a7, i as u64]);
        let a = envelope_field(u0, &mut rng);
        let b = envelope_field(u0, &mut rng);
        let states = times
            .iter()
            .map(|&t| {
                let s = a.axpy(t / cutoff.delta(), &b).expect("grid");
                linear_flow(&s, t, params).scaled(cutoff.psi(t))
            })
            .collect();
        let raw = Trajectory::new(times.clone(), states, *params)?;
        let r = trajectory_xsb_norm(&raw, norm, opts.pad)?;
        let scaled = Trajectory::zeros(*u0.grid(), times.clone(), *params)?.axpy(radius / r, &raw)?;
        images.push(duhamel_map(&scaled, u0, cutoff, params)?);
        members.push(scaled);
    }
    let mut worst: f64 = 0.0;
    for i in 0..probes {
        for j in i + 1..probes {
            let den = trajectory_xsb_norm(&members[i].axpy(-1.0, &members[j])?, norm, opts.pad)?;
            if den == 0.0 {
                continue;
            }
            let num = trajectory_xsb_norm(&images[i].axpy(-1.0, &images[j])?, norm, opts.pad)?;
            worst = worst.max(num / den);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzOptions {
    pub k_max: usize,
    /// Picard stopping tolerance relative to `||psi_delta W u0||_{X_{s,b}}`.
    pub rel_tol: f64,
    pub picard: PicardOptions,
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        Self { k_max: 60, rel_tol: 1e-12, picard: PicardOptions::default() }
    }
}

/// `sup_{0 <= t <= delta/2} ||u(t) - v(t)||_{H^s} / ||u0 - v0||_{H^s}`.
pub fn lipschitz_data_dependence(
    u0: &SpectralField,
    v0: &SpectralField,
    cutoff: &CutoffSpec,
    params: &EquationParams,
    norm: &NormSpec,
) -> Result<f64, DuhamelError> {
    lipschitz_data_dependence_with(u0, v0, cutoff, params, norm, &LipschitzOptions::default())
}

pub fn lipschitz_data_dependence_with(
    u0: &SpectralField,
    v0: &SpectralField,
    cutoff: &CutoffSpec,
    params: &EquationParams,
    norm: &NormSpec,
    opts: &LipschitzOptions,
) -> Result<f64, DuhamelError> {
    let den = u0.hs_distance(v0, norm.s).map_err(PropagatorError::from)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    let solve = |w0: &SpectralField| -> Result<Trajectory, DuhamelError> {
        let scale = trajectory_xsb_norm(&free_solution(w0, cutoff, params, opts.picard.half_points)?, norm, opts.picard.pad)?;
        let tol = (opts.rel_tol * scale).max(f64::MIN_POSITIVE);
        let (u, rep) = picard_iterate_with(w0, cutoff, params, norm, opts.k_max, tol, &opts.picard)?;
        if !rep.converged && rep.contraction_factor >= 1.0 {
            let residual = rep.residuals.last().copied().unwrap_or(f64::NAN);
            return Err(DuhamelError::Divergence { iteration: rep.iterations, residual });
        }
        Ok(u)
    };
    let u = solve(u0)?;
    let v = solve(v0)?;
    let num = u.sup_distance(&v, norm.s, 0.0, 0.5 * cutoff.delta())?;
    Ok(num / den)
}
