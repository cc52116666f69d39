//! Space-time fields on the torus lattice `(xi_k, tau_m) = (k dxi, m dtau)`.
//!
//! Amplitudes are normalized so that `sum |a|^2 dxi dtau` is the space-time
//! `L^2` norm, i.e. `a(xi, tau) = (2 pi)^{-1} * integral of f e^{-i(x xi + t tau)}`.
//! Each frequency row stores only the `tau` intervals it actually occupies.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use super::XsbError;
use crate::dispersion::EquationParams;
use crate::duhamel::CutoffSpec;
use crate::fft;
use crate::propagator::Trajectory;
use crate::rng::stream_rng;
use crate::spectral::{bracket, Grid, NormSpec};

/// Time-window zero padding factor used when none is given.
pub const DEFAULT_PAD: usize = 4;

const DIRECT_CONV_LIMIT: usize = 1 << 14;

/// Contiguous run of `tau` lattice amplitudes starting at index `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: i64,
    pub amps: Vec<Complex64>,
}

impl Segment {
    fn end(&self) -> i64 {
        self.start + self.amps.len() as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    box_length: f64,
    time_window: f64,
    params: EquationParams,
    cutoff: Option<CutoffSpec>,
    rows: BTreeMap<i64, Vec<Segment>>,
}

impl SpaceTimeField {
    pub fn empty(box_length: f64, time_window: f64, params: EquationParams) -> Result<Self, XsbError> {
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(XsbError::BadParameter(format!("box length {box_length}")));
        }
        if !(time_window.is_finite() && time_window > 0.0) {
            return Err(XsbError::BadParameter(format!("time window {time_window}")));
        }
        Ok(Self { box_length, time_window, params, cutoff: None, rows: BTreeMap::new() })
    }

    /// One lattice mode `(k, m)` with amplitude `amp`.
    pub fn single_mode(
        box_length: f64,
        time_window: f64,
        params: EquationParams,
        k: i64,
        m: i64,
        amp: Complex64,
    ) -> Result<Self, XsbError> {
        let mut f = Self::empty(box_length, time_window, params)?;
        f.insert_segment(k, Segment { start: m, amps: vec![amp] });
        Ok(f)
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn time_window(&self) -> f64 {
        self.time_window
    }

    pub fn params(&self) -> &EquationParams {
        &self.params
    }

    pub fn cutoff(&self) -> Option<&CutoffSpec> {
        self.cutoff.as_ref()
    }

    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    pub fn dtau(&self) -> f64 {
        2.0 * PI / self.time_window
    }

    pub fn rows(&self) -> &BTreeMap<i64, Vec<Segment>> {
        &self.rows
    }

    /// Adds `seg` to row `k`, merging with any overlapping segment.
    pub fn insert_segment(&mut self, k: i64, seg: Segment) {
        if seg.amps.is_empty() {
            return;
        }
        let row = self.rows.entry(k).or_default();
        row.push(seg);
        *row = coalesce(std::mem::take(row));
    }

    pub fn amplitude(&self, k: i64, m: i64) -> Complex64 {
        self.rows
            .get(&k)
            .and_then(|row| row.iter().find(|s| m >= s.start && m < s.end()))
            .map(|s| s.amps[(m - s.start) as usize])
            .unwrap_or_default()
    }

    /// Number of stored lattice cells with nonzero amplitude.
    pub fn support_count(&self) -> usize {
        self.rows.values().flatten().map(|s| s.amps.iter().filter(|a| a.norm_sqr() > 0.0).count()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.rows.values().flatten().all(|s| s.amps.iter().all(|a| a.norm_sqr() == 0.0))
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map_rows(|_, a| a * c)
    }

    /// `d/dx`, multiplying row `k` by `i xi_k`.
    pub fn derivative(&self) -> Self {
        let dxi = self.dxi();
        self.map_rows(|k, a| a * Complex64::new(0.0, k as f64 * dxi))
    }

    fn map_rows(&self, f: impl Fn(i64, Complex64) -> Complex64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|(&k, row)| {
                let segs = row.iter().map(|s| Segment { start: s.start, amps: s.amps.iter().map(|&a| f(k, a)).collect() }).collect();
                (k, segs)
            })
            .collect();
        Self { rows, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> Self {
        Self {
            box_length: self.box_length,
            time_window: self.time_window,
            params: self.params,
            cutoff: self.cutoff,
            rows: BTreeMap::new(),
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<(), XsbError> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !close(self.box_length, other.box_length) || !close(self.time_window, other.time_window) || self.params != other.params {
            return Err(XsbError::LatticeMismatch);
        }
        Ok(())
    }

    fn stores(&self, k: i64, m: i64) -> bool {
        self.rows.get(&k).is_some_and(|row| row.iter().any(|s| m >= s.start && m < s.end()))
    }

    /// `max |a(xi, tau) - conj a(-xi, -tau)|` over stored cells whose mirror is also stored.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (&k, row) in &self.rows {
            for s in row {
                for (i, a) in s.amps.iter().enumerate() {
                    let m = s.start + i as i64;
                    if !self.stores(-k, -m) {
                        continue;
                    }
                    worst = worst.max((a - self.amplitude(-k, -m).conj()).norm());
                }
            }
        }
        worst
    }
}

fn coalesce(mut segs: Vec<Segment>) -> Vec<Segment> {
    segs.sort_by_key(|s| s.start);
    let mut out: Vec<Segment> = Vec::new();
    for s in segs {
        match out.last_mut() {
            Some(last) if s.start <= last.end() => {
                let new_end = last.end().max(s.end());
                last.amps.resize((new_end - last.start) as usize, Complex64::default());
                let off = (s.start - last.start) as usize;
                for (i, a) in s.amps.into_iter().enumerate() {
                    last.amps[off + i] += a;
                }
            }
            _ => out.push(s),
        }
    }
    out
}

/// Nearest lattice index of the characteristic surface `tau = p(xi)`.
fn surface_index(p: f64, dtau: f64) -> i64 {
    (p / dtau).round() as i64
}

/// Space-time transform of a sampled trajectory, optionally multiplied by `psi(t / delta)`.
///
/// The time samples are zero padded to `P = next_pow2(pad * M)` points, which sets
/// `T_w = P dt`. Row `k` is demodulated by its surface index before the transform,
/// so its segment covers `P` lattice points centred on `tau = p(xi_k)`.
pub fn spacetime_spectrum(traj: &Trajectory, cutoff: Option<&CutoffSpec>, pad: usize) -> Result<SpaceTimeField, XsbError> {
    let times = traj.times();
    let m = times.len();
    if m < 2 {
        return Err(XsbError::TooShort(m));
    }
    if pad == 0 {
        return Err(XsbError::BadParameter("pad must be at least 1".into()));
    }
    let dt = (times[m - 1] - times[0]) / (m - 1) as f64;
    for (j, t) in times.iter().enumerate() {
        if (t - (times[0] + j as f64 * dt)).abs() > 1e-9 * dt {
            return Err(XsbError::NonUniform);
        }
    }
    if let Some(c) = cutoff {
        let d = c.delta() * (1.0 - 1e-12);
        if times[0] > -d || times[m - 1] < d {
            return Err(XsbError::BadParameter("trajectory does not span the cutoff support".into()));
        }
    }
    let grid: Grid = *traj.grid();
    let params = *traj.params();
    let big_p = (pad * m).next_power_of_two();
    let time_window = big_p as f64 * dt;
    let mut field = SpaceTimeField::empty(grid.box_length(), time_window, params)?;
    field.cutoff = cutoff.copied();
    let dtau = field.dtau();
    let weights: Vec<f64> = times.iter().map(|&t| cutoff.map_or(1.0, |c| c.psi(t))).collect();
    let t0 = times[0];
    let scale = grid.box_length() / (2.0 * PI) * dt;
    let half = (big_p / 2) as i64;
    for slot in 0..grid.n() {
        let k = grid.wavenumber(slot);
        if traj.states().iter().all(|s| s.coeffs()[slot].norm_sqr() == 0.0) {
            continue;
        }
        let nk = surface_index(params.p(grid.xi(slot)), dtau);
        let mut buf = vec![Complex64::default(); big_p];
        for j in 0..m {
            let demod = Complex64::from_polar(1.0, -(nk as f64) * 2.0 * PI * j as f64 / big_p as f64);
            buf[j] = traj.states()[j].coeffs()[slot] * weights[j] * demod;
        }
        fft::forward(&mut buf);
        // reorder so index i holds relative frequency i - P/2
        let amps = (0..big_p)
            .map(|i| {
                let rel = i as i64 - half;
                let src = rel.rem_euclid(big_p as i64) as usize;
                let mg = nk + rel;
                buf[src] * scale * Complex64::from_polar(1.0, -(mg as f64) * dtau * t0)
            })
            .collect();
        field.insert_segment(k, Segment { start: nk - half, amps });
    }
    Ok(field)
}

/// `(sum <xi>^{2s} <tau - p(xi)>^{2b} |a|^2 dxi dtau)^{1/2}`.
pub fn xsb_norm(f: &SpaceTimeField, norm: &NormSpec) -> f64 {
    let (dxi, dtau) = (f.dxi(), f.dtau());
    let mut acc = 0.0;
    for (&k, row) in &f.rows {
        let xi = k as f64 * dxi;
        let p = f.params.p(xi);
        let wx = bracket(xi).powf(2.0 * norm.s);
        let mut racc = 0.0;
        for s in row {
            for (i, a) in s.amps.iter().enumerate() {
                let tau = (s.start + i as i64) as f64 * dtau;
                racc += bracket(tau - p).powf(2.0 * norm.b) * a.norm_sqr();
            }
        }
        acc += wx * racc;
    }
    (acc * dxi * dtau).sqrt()
}

fn convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let len = a.len() + b.len() - 1;
    if a.len() * b.len() <= DIRECT_CONV_LIMIT {
        let mut out = vec![Complex64::default(); len];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = len.next_power_of_two();
    let mut fa = a.to_vec();
    fa.resize(n, Complex64::default());
    let mut fb = b.to_vec();
    fb.resize(n, Complex64::default());
    fft::forward(&mut fa);
    fft::forward(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    fft::inverse(&mut fa);
    fa.truncate(len);
    let inv = 1.0 / n as f64;
    fa.iter().map(|x| x * inv).collect()
}

/// Spectrum of the pointwise product `u v`: the lattice convolution
/// `(2 pi)^{-1} sum a(xi_1, tau_1) b(xi - xi_1, tau - tau_1) dxi dtau`.
pub fn product(u: &SpaceTimeField, v: &SpaceTimeField) -> Result<SpaceTimeField, XsbError> {
    u.check_compatible(v)?;
    let c = u.dxi() * u.dtau() / (2.0 * PI);
    let mut contributions: BTreeMap<i64, Vec<Segment>> = BTreeMap::new();
    for (&k1, r1) in &u.rows {
        for (&k2, r2) in &v.rows {
            for s1 in r1 {
                for s2 in r2 {
                    let amps = convolve(&s1.amps, &s2.amps).into_iter().map(|x| x * c).collect();
                    contributions.entry(k1 + k2).or_default().push(Segment { start: s1.start + s2.start, amps });
                }
            }
        }
    }
    let mut out = u.clone_meta();
    out.cutoff = None;
    out.rows = contributions.into_iter().map(|(k, segs)| (k, coalesce(segs))).collect();
    Ok(out)
}

fn bounds(f: &SpaceTimeField) -> Option<(i64, i64, i64, i64)> {
    let kmin = *f.rows.keys().next()?;
    let kmax = *f.rows.keys().next_back()?;
    let mmin = f.rows.values().flatten().map(|s| s.start).min()?;
    let mmax = f.rows.values().flatten().map(|s| s.end() - 1).max()?;
    Some((kmin, kmax, mmin, mmax))
}

fn fft2(buf: &mut [Complex64], nk: usize, nm: usize, forward: bool) {
    let run = |v: &mut [Complex64]| if forward { fft::forward(v) } else { fft::inverse(v) };
    for row in buf.chunks_mut(nm) {
        run(row);
    }
    let mut col = vec![Complex64::default(); nk];
    for j in 0..nm {
        for i in 0..nk {
            col[i] = buf[i * nm + j];
        }
        run(&mut col);
        for i in 0..nk {
            buf[i * nm + j] = col[i];
        }
    }
}

/// Product computed by synthesizing both fields on a space-time grid that is
/// fine enough to be alias free, multiplying pointwise and transforming back.
/// Cost grows with the bounding box of the supports, so this is meant for
/// compact supports.
pub fn product_physical(u: &SpaceTimeField, v: &SpaceTimeField) -> Result<SpaceTimeField, XsbError> {
    u.check_compatible(v)?;
    let mut out = u.clone_meta();
    out.cutoff = None;
    let (Some(bu), Some(bv)) = (bounds(u), bounds(v)) else { return Ok(out) };
    let nk = ((bu.1 - bu.0 + 1) + (bv.1 - bv.0 + 1)).max(2) as usize;
    let nm = ((bu.3 - bu.2 + 1) + (bv.3 - bv.2 + 1)).max(2) as usize;
    let (nk, nm) = (nk.next_power_of_two(), nm.next_power_of_two());
    let dense = |f: &SpaceTimeField, b: (i64, i64, i64, i64)| {
        let mut buf = vec![Complex64::default(); nk * nm];
        for (&k, row) in &f.rows {
            for s in row {
                for (i, a) in s.amps.iter().enumerate() {
                    let m = s.start + i as i64;
                    buf[(k - b.0) as usize * nm + (m - b.2) as usize] = *a;
                }
            }
        }
        fft2(&mut buf, nk, nm, false);
        buf
    };
    let mut pu = dense(u, bu);
    let pv = dense(v, bv);
    for (x, y) in pu.iter_mut().zip(&pv) {
        *x *= y;
    }
    fft2(&mut pu, nk, nm, true);
    let c = u.dxi() * u.dtau() / (2.0 * PI) / (nk * nm) as f64;
    for i in 0..nk {
        let amps: Vec<Complex64> = pu[i * nm..(i + 1) * nm].iter().map(|x| x * c).collect();
        if amps.iter().any(|a| a.norm_sqr() > 0.0) {
            out.rows.insert(bu.0 + bv.0 + i as i64, vec![Segment { start: bu.2 + bv.2, amps }]);
        }
    }
    Ok(out)
}

fn nonzero_norm(f: &SpaceTimeField, norm: &NormSpec) -> Result<f64, XsbError> {
    let v = xsb_norm(f, norm);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(XsbError::ZeroDenominator)
    }
}

/// `||d_x(u v)||_{X_{s,b-1}} / (||u||_{X_{s,b}} ||v||_{X_{s,b}})`.
pub fn bilinear_ratio(u: &SpaceTimeField, v: &SpaceTimeField, norm: &NormSpec) -> Result<f64, XsbError> {
    let den = nonzero_norm(u, norm)? * nonzero_norm(v, norm)?;
    let out = product(u, v)?.derivative();
    Ok(xsb_norm(&out, &NormSpec::new(norm.s, norm.b - 1.0)) / den)
}

/// `||d_x(u1 u2 u3)||_{X_{s,b-1}} / prod ||u_j||_{X_{s,b}}`.
pub fn trilinear_ratio(u1: &SpaceTimeField, u2: &SpaceTimeField, u3: &SpaceTimeField, norm: &NormSpec) -> Result<f64, XsbError> {
    let den = nonzero_norm(u1, norm)? * nonzero_norm(u2, norm)? * nonzero_norm(u3, norm)?;
    let out = product(&product(u1, u2)?, u3)?.derivative();
    Ok(xsb_norm(&out, &NormSpec::new(norm.s, norm.b - 1.0)) / den)
}

/// `||u v||_{L^2} / (||u||_{X_{-1/2, 1/2-eps}} ||v||_{X_{s, 1/2+eps}})`.
pub fn asym_bilinear_ratio(u: &SpaceTimeField, v: &SpaceTimeField, s: f64, eps: f64) -> Result<f64, XsbError> {
    let den = nonzero_norm(u, &NormSpec::new(-0.5, 0.5 - eps))? * nonzero_norm(v, &NormSpec::new(s, 0.5 + eps))?;
    Ok(xsb_norm(&product(u, v)?, &NormSpec::new(0.0, 0.0)) / den)
}

/// Random positive amplitudes on `{sign xi in [N, 2N), |tau - p(xi)| in [L, 2L)}`,
/// normalized to unit space-time `L^2` norm.
#[allow(clippy::too_many_arguments)]
pub fn block_concentrated_field(
    n: f64,
    l: f64,
    sign: i8,
    grid: &Grid,
    time_window: f64,
    params: &EquationParams,
    seed: u64,
) -> Result<SpaceTimeField, XsbError> {
    if !(n > 0.0 && l > 0.0) || !(sign == 1 || sign == -1) {
        return Err(XsbError::BadParameter(format!("block N = {n}, L = {l}, sign = {sign}")));
    }
    let mut f = SpaceTimeField::empty(grid.box_length(), time_window, *params)?;
    let (dxi, dtau) = (f.dxi(), f.dtau());
    let mut rng = stream_rng(seed, &[0xb10c, n.to_bits(), l.to_bits(), sign as u64]);
    let k_lo = (n / dxi).ceil() as i64;
    let k_hi = ((2.0 * n) / dxi).ceil() as i64;
    for kk in k_lo..k_hi {
        let k = if sign > 0 { kk } else { -kk };
        let p = params.p(k as f64 * dxi);
        // tau - p in [L, 2L) and in (-2L, -L]
        let up = ((p + l) / dtau).ceil() as i64..((p + 2.0 * l) / dtau).ceil() as i64;
        let down = ((p - 2.0 * l) / dtau).floor() as i64 + 1..((p - l) / dtau).floor() as i64 + 1;
        for r in [down, up] {
            if r.start < r.end {
                let amps = r.clone().map(|_| Complex64::new(rng.gen_range(0.5..1.5), 0.0)).collect();
                f.insert_segment(k, Segment { start: r.start, amps });
            }
        }
    }
    let nrm = xsb_norm(&f, &NormSpec::new(0.0, 0.0));
    if nrm == 0.0 {
        return Err(XsbError::EmptySupport);
    }
    Ok(f.scaled(1.0 / nrm))
}

/// Number of lattice cells in the block `{sign xi in [N, 2N), |tau - p(xi)| in [L, 2L)}`.
pub fn block_cell_count(n: f64, l: f64, sign: i8, box_length: f64, time_window: f64, params: &EquationParams) -> usize {
    let dxi = 2.0 * PI / box_length;
    let dtau = 2.0 * PI / time_window;
    let mut count = 0;
    let mut k = 0i64;
    loop {
        let xi = k as f64 * dxi;
        if xi >= 2.0 * n {
            break;
        }
        if xi >= n {
            let p = params.p(sign as f64 * xi);
            let lo = ((p - 2.0 * l) / dtau).floor() as i64 - 1;
            let hi = ((p + 2.0 * l) / dtau).ceil() as i64 + 1;
            for m in lo..=hi {
                let lam = (m as f64 * dtau - p).abs();
                if lam >= l && lam < 2.0 * l {
                    count += 1;
                }
            }
        }
        k += 1;
    }
    count
}
