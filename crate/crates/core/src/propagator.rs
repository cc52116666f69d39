//! Linear group, integrating-factor RK4 stepping, conserved quantities and
//! traveling-wave profiles.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::{EquationKind, EquationParams};
use crate::fft;
use crate::spectral::{dealiased_product, same_grid, Grid, RealField, SpectralError, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("final time must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("sample_every must be at least 1")]
    BadSampling,
    #[error("blow-up at t = {t}: norm {norm:e} exceeds cap {cap:e}")]
    BlowUp { t: f64, norm: f64, cap: f64 },
    #[error("trajectory needs at least one state")]
    Empty,
    #[error("times and states have different lengths ({times} vs {states})")]
    Misaligned { times: usize, states: usize },
    #[error("trajectory times must be strictly increasing")]
    NonIncreasingTimes,
    #[error("Petviashvili iteration did not converge in {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },
    #[error("profile denominator c + alpha xi^2 - beta xi^4 is singular or changes sign on the lattice (min |D| = {min_abs:e})")]
    SingularDenominator { min_abs: f64 },
    #[error("Petviashvili iteration undefined: {0}")]
    Degenerate(&'static str),
}

/// Sampled solution `u(t)` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<SpectralField>,
    params: EquationParams,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<SpectralField>, params: EquationParams) -> Result<Self, PropagatorError> {
        if states.is_empty() {
            return Err(PropagatorError::Empty);
        }
        if times.len() != states.len() {
            return Err(PropagatorError::Misaligned { times: times.len(), states: states.len() });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(PropagatorError::NonIncreasingTimes);
        }
        let g = *states[0].grid();
        for s in &states[1..] {
            same_grid(&g, s.grid())?;
        }
        Ok(Self { times, states, params })
    }

    pub fn zeros(grid: Grid, times: Vec<f64>, params: EquationParams) -> Result<Self, PropagatorError> {
        let states = vec![SpectralField::zeros(grid); times.len()];
        Self::new(times, states, params)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[SpectralField] {
        &self.states
    }

    pub fn params(&self) -> &EquationParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        self.states[0].grid()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &SpectralField {
        self.states.last().expect("nonempty")
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<SpectralField>, EquationParams) {
        (self.times, self.states, self.params)
    }

    /// Pointwise-in-time `self + a * other` on an identical time lattice.
    pub fn axpy(&self, a: f64, other: &Trajectory) -> Result<Trajectory, PropagatorError> {
        if self.times != other.times {
            return Err(PropagatorError::Misaligned { times: self.len(), states: other.len() });
        }
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(x, y)| x.axpy(a, y))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trajectory { times: self.times.clone(), states, params: self.params })
    }

    /// `max_t ||u(t) - v(t)||_{H^s}` over samples with `t` in `[t0, t1]`.
    pub fn sup_distance(&self, other: &Trajectory, s: f64, t0: f64, t1: f64) -> Result<f64, PropagatorError> {
        if self.times != other.times {
            return Err(PropagatorError::Misaligned { times: self.len(), states: other.len() });
        }
        let mut m: f64 = 0.0;
        for ((t, a), b) in self.times.iter().zip(&self.states).zip(&other.states) {
            if *t >= t0 - 1e-12 && *t <= t1 + 1e-12 {
                m = m.max(a.hs_distance(b, s)?);
            }
        }
        Ok(m)
    }
}

/// Phase factors `e^{i t p(xi_k)}` in FFT slot order.
pub fn phases(grid: &Grid, t: f64, params: &EquationParams) -> Vec<Complex64> {
    (0..grid.n()).map(|j| Complex64::from_polar(1.0, t * params.p(grid.xi(j)))).collect()
}

/// `W(t) u`.
pub fn linear_flow(field: &SpectralField, t: f64, params: &EquationParams) -> SpectralField {
    let ph = phases(field.grid(), t, params);
    let coeffs = field.coeffs().iter().zip(&ph).map(|(c, e)| c * e).collect();
    SpectralField::new(*field.grid(), coeffs).expect("same length")
}

/// `-d/dx (u^2/2)` or `-d/dx (u^3/3)` with dealiased products.
pub fn nonlinear_term(field: &SpectralField, params: &EquationParams) -> SpectralField {
    let (prod, w) = match params.kind() {
        EquationKind::Kawahara => (dealiased_product(field, field, None), 0.5),
        EquationKind::ModifiedKawahara => (dealiased_product(field, field, Some(field)), 1.0 / 3.0),
    };
    prod.expect("same grid").derivative().scaled(-w)
}

/// Integrating-factor RK4 stepper with cached phases.
#[derive(Debug, Clone)]
pub struct Ifrk4 {
    grid: Grid,
    params: EquationParams,
    dt: f64,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    nonlinear: bool,
}

impl Ifrk4 {
    pub fn new(grid: Grid, dt: f64, params: EquationParams) -> Result<Self, PropagatorError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(PropagatorError::BadTimeStep(dt));
        }
        Ok(Self {
            grid,
            params,
            dt,
            half: phases(&grid, 0.5 * dt, &params),
            full: phases(&grid, dt, &params),
            nonlinear: true,
        })
    }

    /// Stepper for the linear problem alone.
    pub fn linear_only(grid: Grid, dt: f64, params: EquationParams) -> Result<Self, PropagatorError> {
        let mut s = Self::new(grid, dt, params)?;
        s.nonlinear = false;
        Ok(s)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn rhs(&self, u: &[Complex64]) -> Vec<Complex64> {
        if !self.nonlinear {
            return vec![Complex64::new(0.0, 0.0); u.len()];
        }
        let f = SpectralField::new(self.grid, u.to_vec()).expect("grid length");
        nonlinear_term(&f, &self.params).into_coeffs()
    }

    pub fn step(&self, state: &SpectralField) -> Result<SpectralField, PropagatorError> {
        same_grid(&self.grid, state.grid())?;
        let u = state.coeffs();
        let (e1, e2, dt) = (&self.half, &self.full, self.dt);
        let n = u.len();
        let k1 = self.rhs(u);
        let eu: Vec<Complex64> = (0..n).map(|j| e1[j] * u[j]).collect();
        let u2: Vec<Complex64> = (0..n).map(|j| e1[j] * (u[j] + 0.5 * dt * k1[j])).collect();
        let k2 = self.rhs(&u2);
        let u3: Vec<Complex64> = (0..n).map(|j| eu[j] + 0.5 * dt * k2[j]).collect();
        let k3 = self.rhs(&u3);
        let u4: Vec<Complex64> = (0..n).map(|j| e2[j] * u[j] + dt * e1[j] * k3[j]).collect();
        let k4 = self.rhs(&u4);
        let out = (0..n)
            .map(|j| e2[j] * u[j] + dt / 6.0 * (e2[j] * k1[j] + 2.0 * e1[j] * (k2[j] + k3[j]) + k4[j]))
            .collect();
        Ok(SpectralField::new(self.grid, out)?)
    }
}

pub fn step_ifrk4(state: &SpectralField, dt: f64, params: &EquationParams) -> Result<SpectralField, PropagatorError> {
    Ifrk4::new(*state.grid(), dt, *params)?.step(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Abort once `||u||_{H^s}` exceeds this multiple of its initial value.
    pub blowup_factor: f64,
    pub blowup_s: f64,
    pub nonlinear: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { blowup_factor: 1e6, blowup_s: 0.0, nonlinear: true }
    }
}

pub fn solve(
    u0: &SpectralField,
    t_final: f64,
    dt: f64,
    params: &EquationParams,
    sample_every: usize,
) -> Result<Trajectory, PropagatorError> {
    solve_with(u0, t_final, dt, params, sample_every, &SolveOptions::default())
}

/// Number of steps covering `t_final` with step at most `dt` (up to rounding).
pub fn step_count(t_final: f64, dt: f64) -> usize {
    let r = t_final / dt;
    let k = r.round();
    if (r - k).abs() < 1e-9 * r.max(1.0) {
        (k as usize).max(1)
    } else {
        (r.ceil() as usize).max(1)
    }
}

pub fn solve_with(
    u0: &SpectralField,
    t_final: f64,
    dt: f64,
    params: &EquationParams,
    sample_every: usize,
    opts: &SolveOptions,
) -> Result<Trajectory, PropagatorError> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(PropagatorError::BadHorizon(t_final));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(PropagatorError::BadTimeStep(dt));
    }
    if sample_every == 0 {
        return Err(PropagatorError::BadSampling);
    }
    let steps = step_count(t_final, dt);
    let h = t_final / steps as f64;
    let mut stepper = Ifrk4::new(*u0.grid(), h, *params)?;
    stepper.nonlinear = opts.nonlinear;
    let cap = opts.blowup_factor * u0.hs_norm(opts.blowup_s);
    let mut times = vec![0.0];
    let mut states = vec![u0.clone()];
    let mut u = u0.clone();
    for i in 1..=steps {
        u = stepper.step(&u)?;
        let t = i as f64 * h;
        let norm = u.hs_norm(opts.blowup_s);
        if !norm.is_finite() || norm > cap {
            return Err(PropagatorError::BlowUp { t, norm, cap });
        }
        if i % sample_every == 0 || i == steps {
            times.push(if i == steps { t_final } else { t });
            states.push(u.clone());
        }
    }
    Trajectory::new(times, states, *params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantLog {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub l2: Vec<f64>,
    pub hamiltonian: Vec<f64>,
}

/// `∫ u^p dx` for the band-limited part that the dealiased nonlinearity sees,
/// evaluated on a doubled grid so the quadrature is exact.
fn power_integral(u: &SpectralField, power: i32, band: i64) -> f64 {
    let g = u.grid();
    let m = 2 * g.n();
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..g.n() {
        let k = g.wavenumber(j);
        if k.abs() <= band {
            buf[fft::fft_slot(k, m).expect("fits")] = u.coeffs()[j];
        }
    }
    fft::inverse(&mut buf);
    let dx = g.box_length() / m as f64;
    buf.iter().map(|v| v.re.powi(power)).sum::<f64>() * dx
}

/// Mass, `L^2` and Hamiltonian of one state.
pub fn state_invariants(u: &SpectralField, params: &EquationParams) -> (f64, f64, f64) {
    let g = u.grid();
    let l = g.box_length();
    let mass = l * u.at(0).re;
    let (mut l2, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for (j, c) in u.coeffs().iter().enumerate() {
        let xi = g.xi(j);
        let a = c.norm_sqr();
        l2 += a;
        d1 += xi * xi * a;
        d2 += xi.powi(4) * a;
    }
    let (l2, d1, d2) = (l * l2, l * d1, l * d2);
    let pot = match params.kind() {
        EquationKind::Kawahara => -power_integral(u, 3, g.quadratic_band()) / 6.0,
        EquationKind::ModifiedKawahara => -power_integral(u, 4, g.cubic_band()) / 12.0,
    };
    let ham = pot + 0.5 * params.alpha() * d1 - 0.5 * params.beta() * d2;
    (mass, l2, ham)
}

pub fn invariants(traj: &Trajectory) -> InvariantLog {
    let mut log = InvariantLog { times: traj.times().to_vec(), mass: vec![], l2: vec![], hamiltonian: vec![] };
    for u in traj.states() {
        let (m, l2, h) = state_invariants(u, traj.params());
        log.mass.push(m);
        log.l2.push(l2);
        log.hamiltonian.push(h);
    }
    log
}

/// Variational derivative of the Hamiltonian as used by [`state_invariants`].
pub fn hamiltonian_gradient(u: &SpectralField, params: &EquationParams) -> SpectralField {
    let g = *u.grid();
    let pot = match params.kind() {
        EquationKind::Kawahara => dealiased_product(u, u, None).expect("grid").scaled(-0.5),
        EquationKind::ModifiedKawahara => dealiased_product(u, u, Some(u)).expect("grid").scaled(-1.0 / 3.0),
    };
    let coeffs = (0..g.n())
        .map(|j| {
            let xi = g.xi(j);
            pot.coeffs()[j] + u.coeffs()[j] * (params.alpha() * xi * xi - params.beta() * xi.powi(4))
        })
        .collect();
    SpectralField::new(g, coeffs).expect("grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PetviashviliReport {
    pub iterations: usize,
    pub residual: f64,
    pub stabilizer: f64,
}

/// Relative profile-equation residual `||D phi - N(phi)|| / ||D phi||`.
pub fn profile_residual(phi: &SpectralField, c: f64, params: &EquationParams) -> f64 {
    let d = profile_symbol(phi.grid(), c, params);
    let nl = profile_nonlinearity(phi, params);
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..d.len() {
        let dp = phi.coeffs()[j] * d[j];
        num += (dp - nl.coeffs()[j]).norm_sqr();
        den += dp.norm_sqr();
    }
    if den == 0.0 {
        return f64::INFINITY;
    }
    (num / den).sqrt()
}

/// `D(xi) = c + alpha xi^2 - beta xi^4`.
pub fn profile_symbol(grid: &Grid, c: f64, params: &EquationParams) -> Vec<f64> {
    (0..grid.n())
        .map(|j| {
            let x2 = grid.xi(j).powi(2);
            c + params.alpha() * x2 - params.beta() * x2 * x2
        })
        .collect()
}

fn profile_nonlinearity(phi: &SpectralField, params: &EquationParams) -> SpectralField {
    match params.kind() {
        EquationKind::Kawahara => dealiased_product(phi, phi, None).expect("grid").scaled(0.5),
        EquationKind::ModifiedKawahara => dealiased_product(phi, phi, Some(phi)).expect("grid").scaled(1.0 / 3.0),
    }
}

/// Default stabilizing exponent for the equation's nonlinearity.
pub fn default_gamma(kind: EquationKind) -> f64 {
    match kind {
        EquationKind::Kawahara => 2.0,
        EquationKind::ModifiedKawahara => 1.5,
    }
}

/// Even `amplitude * sech^2(x / width)` centered at `x = 0` of the periodic box.
pub fn sech2_guess(grid: Grid, amplitude: f64, width: f64) -> SpectralField {
    let l = grid.box_length();
    let u = RealField::from_fn(grid, |x| {
        let y = if x > 0.5 * l { x - l } else { x };
        amplitude / (y / width).cosh().powi(2)
    });
    crate::spectral::to_spectral(&u)
}

/// Petviashvili iteration for `D(xi) phi_hat = (phi^2/2)^` (or `(phi^3/3)^`),
/// the once-integrated profile equation of a wave `u = phi(x - c t)`.
pub fn traveling_wave_petviashvili(
    c: f64,
    params: &EquationParams,
    guess: &SpectralField,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(SpectralField, PetviashviliReport), PropagatorError> {
    let grid = *guess.grid();
    let d = profile_symbol(&grid, c, params);
    let (dmin, dmax) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let min_abs = d.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let max_abs = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if dmin * dmax <= 0.0 || min_abs <= 1e-10 * max_abs {
        return Err(PropagatorError::SingularDenominator { min_abs });
    }
    let band = match params.kind() {
        EquationKind::Kawahara => grid.quadratic_band(),
        EquationKind::ModifiedKawahara => grid.cubic_band(),
    };
    let mut phi = SpectralField::from_wavenumbers(grid, |k| if k.abs() <= band { guess.at(k) } else { Complex64::new(0.0, 0.0) });
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let nl = profile_nonlinearity(&phi, params);
        let (mut dpp, mut npp) = (0.0, 0.0);
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..grid.n() {
            let p = phi.coeffs()[j];
            let dp = p * d[j];
            dpp += (dp * p.conj()).re;
            npp += (nl.coeffs()[j] * p.conj()).re;
            num += (dp - nl.coeffs()[j]).norm_sqr();
            den += dp.norm_sqr();
        }
        if den == 0.0 || npp == 0.0 || !npp.is_finite() {
            return Err(PropagatorError::Degenerate("zero nonlinear pairing (zero or orthogonal guess)"));
        }
        let m = dpp / npp;
        if m <= 0.0 {
            return Err(PropagatorError::Degenerate("nonpositive stabilizing factor"));
        }
        residual = (num / den).sqrt();
        if residual < tol {
            return Ok((phi, PetviashviliReport { iterations: it, residual, stabilizer: m }));
        }
        if it == max_iter {
            break;
        }
        let mg = m.powf(gamma);
        let coeffs = (0..grid.n()).map(|j| nl.coeffs()[j] * (mg / d[j])).collect();
        // keep the iterate real: the imaginary part is an unstabilized eigendirection
        phi = SpectralField::new(grid, coeffs)?.symmetrized();
    }
    Err(PropagatorError::NonConvergence { iters: max_iter, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{make_grid, to_physical, to_spectral};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn kw(a: f64, b: f64) -> EquationParams {
        EquationParams::kawahara(a, b).unwrap()
    }

    fn mk(a: f64, b: f64) -> EquationParams {
        EquationParams::modified(a, b).unwrap()
    }

    fn close(a: &SpectralField, b: &SpectralField, tol: f64) -> bool {
        a.coeffs().iter().zip(b.coeffs()).all(|(x, y)| (x - y).norm() <= tol)
    }

    fn smooth(grid: Grid, amp: f64, seed: u64) -> SpectralField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x0 = rng.gen_range(0.3..0.7) * grid.box_length();
        let w = rng.gen_range(2.0..3.0);
        let u = RealField::from_fn(grid, |x| amp * (-((x - x0) / w).powi(2)).exp() * (1.0 + 0.3 * (x / w).sin()));
        to_spectral(&u)
    }

    #[test]
    fn linear_flow_examples() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let u = to_spectral(&RealField::from_fn(g, |x| x.sin() + (3.0 * x).cos()));
        assert_eq!(linear_flow(&u, 0.0, &kw(1.0, 1.0)), u);
        let m1 = SpectralField::from_wavenumbers(g, |k| if k == 1 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        assert!(close(&linear_flow(&m1, 3.7, &kw(1.0, 1.0)), &m1, 1e-15));
        let m2 = SpectralField::from_wavenumbers(g, |k| if k == 2 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        assert!(close(&linear_flow(&m2, PI, &kw(0.0, 1.0)), &m2, 1e-13));
    }

    #[test]
    fn nonlinear_examples() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let u = to_spectral(&RealField::from_fn(g, f64::cos));
        let want = to_spectral(&RealField::from_fn(g, |x| 0.5 * (2.0 * x).sin()));
        assert!(close(&nonlinear_term(&u, &kw(1.0, 1.0)), &want, 1e-14));
        let want = to_spectral(&RealField::from_fn(g, |x| 0.25 * (x.sin() + (3.0 * x).sin())));
        assert!(close(&nonlinear_term(&u, &mk(1.0, 1.0)), &want, 1e-14));
        assert!(nonlinear_term(&SpectralField::zeros(g), &kw(1.0, 1.0)).is_zero());
    }

    #[test]
    fn step_examples() {
        let g = make_grid(64, 2.0 * PI * 4.0).unwrap();
        let p = kw(1.0, 1.0);
        assert!(step_ifrk4(&SpectralField::zeros(g), 0.01, &p).unwrap().is_zero());
        let u = smooth(g, 1.0, 1);
        let lin = Ifrk4::linear_only(g, 0.37, p).unwrap().step(&u).unwrap();
        assert!(close(&lin, &linear_flow(&u, 0.37, &p), 1e-13));
        assert_eq!(step_ifrk4(&u, 0.0, &p), Err(PropagatorError::BadTimeStep(0.0)));
    }

    #[test]
    fn self_convergence_order_four() {
        let g = make_grid(64, 2.0 * PI * 8.0).unwrap();
        for p in [kw(1.0, -1.0), mk(1.0, 1.0)] {
            let u0 = smooth(g, 0.8, 11);
            let t = 1.0;
            let run = |dt: f64| solve(&u0, t, dt, &p, 1_000_000).unwrap().last().clone();
            let (a, b, c) = (run(0.02), run(0.01), run(0.005));
            let e1 = a.hs_distance(&b, 0.0).unwrap();
            let e2 = b.hs_distance(&c, 0.0).unwrap();
            let order = (e1 / e2).log2();
            assert!((order - 4.0).abs() < 0.2, "order {order}");
        }
    }

    #[test]
    fn solve_zero_and_sampling() {
        let g = make_grid(32, 10.0).unwrap();
        let tr = solve(&SpectralField::zeros(g), 1.0, 0.1, &kw(1.0, 1.0), 3).unwrap();
        assert_eq!(tr.times().len(), 5);
        assert_eq!(tr.times()[0], 0.0);
        assert_eq!(*tr.times().last().unwrap(), 1.0);
        assert!(tr.states().iter().all(|s| s.is_zero()));
        assert_eq!(solve(&SpectralField::zeros(g), 1.0, 0.1, &kw(1.0, 1.0), 0), Err(PropagatorError::BadSampling));
    }

    #[test]
    fn blowup_is_reported() {
        let g = make_grid(64, 2.0 * PI * 4.0).unwrap();
        let u0 = smooth(g, 1.0, 3);
        let opts = SolveOptions { blowup_factor: 1.0 + 1e-9, blowup_s: 10.0, nonlinear: true };
        match solve_with(&u0, 1.0, 0.01, &kw(0.0, 1.0), 1, &opts) {
            Err(PropagatorError::BlowUp { t, .. }) => assert!(t > 0.0 && t <= 1.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn invariant_examples() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let (m, l2, h) = state_invariants(&SpectralField::zeros(g), &kw(1.0, 1.0));
        assert_eq!((m, l2, h), (0.0, 0.0, 0.0));
        let u = to_spectral(&RealField::from_fn(g, f64::cos));
        let (m, l2, h) = state_invariants(&u, &kw(1.0, 1.0));
        assert!(m.abs() < 1e-14);
        assert!((l2 - PI).abs() < 1e-13);
        assert!(h.abs() < 1e-13);
        let (_, _, h) = state_invariants(&u, &kw(1.0, -1.0));
        assert!((h - PI).abs() < 1e-13);
    }

    #[test]
    fn hamiltonian_gradient_by_finite_differences() {
        let g = make_grid(64, 2.0 * PI * 2.0).unwrap();
        for p in [kw(0.7, -1.3), mk(-0.4, 0.9)] {
            let u = smooth(g, 0.9, 5);
            let v = smooth(g, 1.0, 6);
            let grad = hamiltonian_gradient(&u, &p);
            let eps = 1e-5;
            let hp = state_invariants(&u.axpy(eps, &v).unwrap(), &p).2;
            let hm = state_invariants(&u.axpy(-eps, &v).unwrap(), &p).2;
            let fd = (hp - hm) / (2.0 * eps);
            // first variation is L * sum grad_k conj(v_k)
            let pair: f64 = grad.coeffs().iter().zip(v.coeffs()).map(|(a, b)| (a * b.conj()).re).sum::<f64>() * g.box_length();
            assert!((fd - pair).abs() < 1e-6 * pair.abs().max(1.0), "{fd} vs {pair}");
            // d/dx of the gradient must reproduce the evolution right-hand side
            let rhs_nl = nonlinear_term(&u, &p);
            let dgrad = grad.derivative();
            for j in 0..g.n() {
                let xi = g.xi(j);
                let lin = u.coeffs()[j] * Complex64::new(0.0, p.p(xi));
                let want = if j == g.nyquist_slot() { Complex64::new(0.0, 0.0) } else { rhs_nl.coeffs()[j] + lin };
                assert!((dgrad.coeffs()[j] - want).norm() < 1e-12 * (1.0 + xi.abs().powi(5)));
            }
        }
    }

    #[test]
    fn petviashvili_zero_guess_and_singular() {
        let g = make_grid(64, 2.0 * PI * 4.0).unwrap();
        let p = kw(1.0, -1.0);
        assert!(matches!(
            traveling_wave_petviashvili(1.0, &p, &SpectralField::zeros(g), 2.0, 1e-10, 100),
            Err(PropagatorError::Degenerate(_))
        ));
        let guess = sech2_guess(g, 1.0, 1.0);
        assert!(matches!(
            traveling_wave_petviashvili(1.0, &kw(0.0, 1.0), &guess, 2.0, 1e-10, 100),
            Err(PropagatorError::SingularDenominator { .. })
        ));
    }

    #[test]
    fn petviashvili_converges_and_scales() {
        let g = make_grid(256, 2.0 * PI * 4.0).unwrap();
        let p = kw(1.0, -1.0);
        let (phi, rep) = traveling_wave_petviashvili(1.0, &p, &sech2_guess(g, 3.0, 1.5), 2.0, 1e-11, 500).unwrap();
        assert!(rep.residual < 1e-11);
        assert!((rep.stabilizer - 1.0).abs() < 1e-8);
        assert!(profile_residual(&phi, 1.0, &p) < 1e-11);
        assert!(phi.symmetry_defect() < 1e-12);

        // alpha = 0: mu^4 phi(mu x) solves the profile equation with c' = mu^4 c
        let p0 = kw(0.0, -1.0);
        let tol = 1e-11;
        let (phi0, _) = traveling_wave_petviashvili(0.8, &p0, &sech2_guess(g, 2.0, 1.0), 2.0, tol, 500).unwrap();
        let mu: f64 = 1.5;
        let g2 = make_grid(256, g.box_length() / mu).unwrap();
        let scaled = SpectralField::new(g2, phi0.coeffs().iter().map(|c| c * mu.powi(4)).collect()).unwrap();
        assert!(profile_residual(&scaled, mu.powi(4) * 0.8, &p0) < 10.0 * tol);
        let back = to_physical(&scaled);
        assert_eq!(back.values().len(), 256);
    }

    #[test]
    fn petviashvili_modified_kawahara() {
        let g = make_grid(256, 2.0 * PI * 4.0).unwrap();
        let p = mk(1.0, -1.0);
        let (_, rep) = traveling_wave_petviashvili(1.0, &p, &sech2_guess(g, 2.0, 1.5), 1.5, 1e-10, 1000).unwrap();
        assert!(rep.residual < 1e-10);
    }
}
