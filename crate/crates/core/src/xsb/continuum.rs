//! Piecewise-constant space-time fields on the real line.
//!
//! A field is constant on cells `[k dxi, (k+1) dxi) x J` of the `(xi, mu)` plane with
//! nonnegative amplitudes, where `mu = tau - m p(xi / m)` is the modulation measured
//! from the surface of `m` equal waves (`m = 1` is the usual `tau - p(xi)`). The
//! transform convention is the same as on the lattice. Products are projected onto
//! output cells using exact cell-triple interaction measures, so no time or frequency
//! lattice has to resolve the dispersion; a product of fields on surfaces `m1`, `m2`
//! lives on `m1 + m2`, which puts its fold at `mu = 0` where the output grid is finest.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::XsbError;
use crate::cellkernel::{leaf_mass, phase_leaves, xi_triangles, Interval, Phase, RefineOptions};
use crate::dispersion::EquationParams;
use crate::spectral::NormSpec;

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// `int over [k dxi, (k+1) dxi)` of `<xi>^{2s}`, times `xi^2` when `deriv`.
pub fn xi_weight(k: i64, dxi: f64, s: f64, deriv: bool) -> f64 {
    let (a, b) = (k as f64 * dxi, (k + 1) as f64 * dxi);
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    GL8.iter()
        .map(|&(x, w)| {
            let xi = c + r * x;
            let v = (1.0 + xi.abs()).powf(2.0 * s);
            w * if deriv { v * xi * xi } else { v }
        })
        .sum::<f64>()
        * r
}

/// `int_J <lambda>^{2b} d lambda`, exact.
pub fn lambda_weight(j: &Interval, b: f64) -> f64 {
    let q = 2.0 * b + 1.0;
    let g = |x: f64| {
        let m = if q.abs() < 1e-12 { (1.0 + x.abs()).ln() } else { ((1.0 + x.abs()).powf(q) - 1.0) / q };
        m.copysign(x)
    };
    g(j.hi) - g(j.lo)
}

/// Output modulation cells: width `1/c` on `[-1, 1)`, then `c` cells per dyad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub per_dyad: usize,
}

impl LambdaGrid {
    pub fn index(&self, lambda: f64) -> i64 {
        let c = self.per_dyad as f64;
        let ci = self.per_dyad as i64;
        if lambda.abs() < 1.0 {
            (lambda * c).floor() as i64
        } else if lambda >= 1.0 {
            ci + (c * lambda.log2()).floor() as i64
        } else {
            -ci - (c * (-lambda).log2()).ceil() as i64
        }
    }

    pub fn interval(&self, i: i64) -> Interval {
        let c = self.per_dyad as f64;
        let ci = self.per_dyad as i64;
        if (-ci..ci).contains(&i) {
            Interval::new(i as f64 / c, (i + 1) as f64 / c)
        } else if i >= ci {
            let j = (i - ci) as f64;
            Interval::new((j / c).exp2(), ((j + 1.0) / c).exp2())
        } else {
            let j = (-ci - 1 - i) as f64;
            Interval::new(-((j + 1.0) / c).exp2(), -(j / c).exp2())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductOptions {
    pub lambda: LambdaGrid,
    pub refine: RefineOptions,
}

impl Default for ProductOptions {
    fn default() -> Self {
        Self { lambda: LambdaGrid { per_dyad: 4 }, refine: RefineOptions { tol: 0.1, min_width: 0.25, max_depth: 6 } }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    dxi: f64,
    params: EquationParams,
    surface: u32,
    rows: BTreeMap<i64, Vec<(Interval, f64)>>,
}

impl CellField {
    pub fn new(dxi: f64, params: EquationParams) -> Result<Self, XsbError> {
        Self::on_surface(dxi, params, 1)
    }

    pub fn on_surface(dxi: f64, params: EquationParams, surface: u32) -> Result<Self, XsbError> {
        if !(dxi > 0.0 && dxi.is_finite()) {
            return Err(XsbError::BadParameter(format!("cell width {dxi}")));
        }
        if surface == 0 {
            return Err(XsbError::BadParameter("surface index 0".into()));
        }
        Ok(Self { dxi, params, surface, rows: BTreeMap::new() })
    }

    /// Adds a cell; amplitudes must be nonnegative.
    pub fn insert(&mut self, k: i64, j: Interval, amp: f64) -> Result<(), XsbError> {
        if !(amp >= 0.0 && amp.is_finite()) || !(j.width() > 0.0) {
            return Err(XsbError::BadParameter(format!("cell ({k}, {j:?}) amplitude {amp}")));
        }
        self.rows.entry(k).or_default().push((j, amp));
        Ok(())
    }

    pub fn dxi(&self) -> f64 {
        self.dxi
    }

    pub fn params(&self) -> &EquationParams {
        &self.params
    }

    pub fn surface(&self) -> u32 {
        self.surface
    }

    pub fn rows(&self) -> &BTreeMap<i64, Vec<(Interval, f64)>> {
        &self.rows
    }

    pub fn cell_count(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.rows.values().flatten().all(|c| c.1 == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.rows.values_mut().flatten().for_each(|cell| cell.1 *= c);
        out
    }

    fn weighted_norm(&self, norm: &NormSpec, deriv: bool) -> f64 {
        if self.surface == 1 {
            return self
                .rows
                .iter()
                .map(|(&k, row)| {
                    let wx = xi_weight(k, self.dxi, norm.s, deriv);
                    row.iter().map(|(j, a)| a * a * lambda_weight(j, norm.b)).sum::<f64>() * wx
                })
                .sum::<f64>()
                .sqrt();
        }
        let m = self.surface as f64;
        let p = self.params;
        self.rows
            .iter()
            .map(|(&k, row)| {
                let (lo, hi) = (k as f64 * self.dxi, (k + 1) as f64 * self.dxi);
                let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                GL8.iter()
                    .map(|&(x, w)| {
                        let xi = c + r * x;
                        let shift = m * p.p(xi / m) - p.p(xi);
                        let v = (1.0 + xi.abs()).powf(2.0 * norm.s) * if deriv { xi * xi } else { 1.0 };
                        let inner: f64 = row
                            .iter()
                            .map(|(j, a)| a * a * lambda_weight(&Interval::new(j.lo + shift, j.hi + shift), norm.b))
                            .sum();
                        w * r * v * inner
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `||f||_{X_{s,b}}`
    pub fn norm(&self, norm: &NormSpec) -> f64 {
        self.weighted_norm(norm, false)
    }

    /// `||d_x f||_{X_{s,b}}`
    pub fn derivative_norm(&self, norm: &NormSpec) -> f64 {
        self.weighted_norm(norm, true)
    }
}

fn check_pair(u: &CellField, v: &CellField) -> Result<(), XsbError> {
    if u.dxi != v.dxi || u.params != v.params {
        return Err(XsbError::LatticeMismatch);
    }
    Ok(())
}

/// Cell averages of the transform of `uv` on `(k, opts.lambda)` cells of surface
/// `u.surface() + v.surface()`.
pub fn cell_product(u: &CellField, v: &CellField, opts: &ProductOptions) -> Result<CellField, XsbError> {
    check_pair(u, v)?;
    let dxi = u.dxi;
    let params = u.params;
    let grid = opts.lambda;
    let min_in = u.rows.values().chain(v.rows.values()).flatten().map(|c| c.0.width()).fold(f64::INFINITY, f64::min);
    let refine = RefineOptions { min_width: opts.refine.min_width.min(min_in), ..opts.refine };
    let vrows: Vec<(&i64, &Vec<(Interval, f64)>)> = v.rows.iter().collect();
    let surface = u.surface + v.surface;
    let phase = Phase::new(&params, [u.surface, v.surface, surface]);
    let parts: Vec<BTreeMap<(i64, i64), f64>> = u
        .rows
        .par_iter()
        .map(|(&k1, row1)| {
            let mut acc: BTreeMap<(i64, i64), f64> = BTreeMap::new();
            for &(&k2, row2) in &vrows {
                for tri in xi_triangles(k1, k2, dxi) {
                    let kout = -tri.k3 - 1;
                    let leaves = phase_leaves(&tri, &phase, &refine, &|_, _| true);
                    for leaf in &leaves {
                        for (j1, a) in row1 {
                            for (j2, b) in row2 {
                                let w = a * b;
                                if w == 0.0 {
                                    continue;
                                }
                                let lo = leaf.h[0] + j1.lo + j2.lo;
                                let hi = leaf.h[2] + j1.hi + j2.hi;
                                for i in grid.index(lo) - 1..=grid.index(hi) + 1 {
                                    let jo = grid.interval(i);
                                    if !jo.intersects(lo, hi) {
                                        continue;
                                    }
                                    let m = leaf_mass(leaf, j1, j2, &jo.reflected(), None);
                                    if m > 0.0 {
                                        *acc.entry((kout, i)).or_insert(0.0) += w * m;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    for part in parts {
        for (key, m) in part {
            *total.entry(key).or_insert(0.0) += m;
        }
    }
    let mut out = CellField::on_surface(dxi, params, surface)?;
    for ((k, i), m) in total {
        let jo = grid.interval(i);
        out.insert(k, jo, m / (2.0 * PI * dxi * jo.width()))?;
    }
    Ok(out)
}

fn nonzero(f: &CellField, norm: &NormSpec) -> Result<f64, XsbError> {
    let n = f.norm(norm);
    if n > 0.0 {
        Ok(n)
    } else {
        Err(XsbError::ZeroDenominator)
    }
}

/// `||d_x(uv)||_{X_{s,b-1}} / (||u||_{X_{s,b}} ||v||_{X_{s,b}})`
pub fn cell_bilinear_ratio(u: &CellField, v: &CellField, norm: &NormSpec, opts: &ProductOptions) -> Result<f64, XsbError> {
    let den = nonzero(u, norm)? * nonzero(v, norm)?;
    Ok(cell_product(u, v, opts)?.derivative_norm(&NormSpec::new(norm.s, norm.b - 1.0)) / den)
}

/// `||d_x(u1 u2 u3)||_{X_{s,b-1}} / prod ||u_j||_{X_{s,b}}`
pub fn cell_trilinear_ratio(
    u1: &CellField,
    u2: &CellField,
    u3: &CellField,
    norm: &NormSpec,
    opts: &ProductOptions,
) -> Result<f64, XsbError> {
    let den = nonzero(u1, norm)? * nonzero(u2, norm)? * nonzero(u3, norm)?;
    let out = cell_product(&cell_product(u1, u2, opts)?, u3, opts)?;
    Ok(out.derivative_norm(&NormSpec::new(norm.s, norm.b - 1.0)) / den)
}

/// `||uv||_{L^2} / (||u||_{X_{-1/2, 1/2-eps}} ||v||_{X_{s, 1/2+eps}})`
pub fn cell_asym_ratio(u: &CellField, v: &CellField, s: f64, eps: f64, opts: &ProductOptions) -> Result<f64, XsbError> {
    let den = nonzero(u, &NormSpec::new(-0.5, 0.5 - eps))? * nonzero(v, &NormSpec::new(s, 0.5 + eps))?;
    Ok(cell_product(u, v, opts)?.norm(&NormSpec::new(0.0, 0.0)) / den)
}

fn modulation_halves(l: f64) -> [Interval; 2] {
    let j = Interval::new(l - 1.0, 2.0 * l - 1.0);
    [j, j.reflected()]
}

fn random_rows(
    ks: std::ops::Range<i64>,
    l: f64,
    dxi: f64,
    params: &EquationParams,
    rng: &mut impl Rng,
) -> Result<CellField, XsbError> {
    if ks.is_empty() {
        return Err(XsbError::EmptySupport);
    }
    if !(l >= 1.0) {
        return Err(XsbError::BadParameter(format!("modulation dyadic {l}")));
    }
    let mut f = CellField::new(dxi, *params)?;
    for k in ks {
        for j in modulation_halves(l) {
            f.insert(k, j, rng.gen_range(0.5..1.5))?;
        }
    }
    let n = f.norm(&NormSpec::new(0.0, 0.0));
    Ok(f.scaled(1.0 / n))
}

/// Random amplitudes on `{sign xi in [N, 2N), <lambda> in [L, 2L)}`, unit `L^2` norm.
pub fn block_cell_field(
    n: f64,
    l: f64,
    sign: i8,
    dxi: f64,
    params: &EquationParams,
    rng: &mut impl Rng,
) -> Result<CellField, XsbError> {
    let (a, b) = ((n / dxi).round() as i64, (2.0 * n / dxi).round() as i64);
    let ks = if sign >= 0 { a..b } else { -b..-a };
    random_rows(ks, l, dxi, params, rng)
}

/// Random amplitudes on the band `sign xi in [N, N + width)`, `<lambda> in [L, 2L)`.
pub fn band_cell_field(
    n: f64,
    width: f64,
    l: f64,
    sign: i8,
    dxi: f64,
    params: &EquationParams,
    rng: &mut impl Rng,
) -> Result<CellField, XsbError> {
    let (a, b) = ((n / dxi).round() as i64, ((n + width) / dxi).round() as i64);
    let ks = if sign >= 0 { a..b } else { -b..-a };
    random_rows(ks, l, dxi, params, rng)
}
