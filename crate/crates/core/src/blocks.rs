//! Dyadic block multipliers on the three-wave hyperplane and a trilinear
//! power-iteration estimator for their norms.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cellkernel::{leaf_mass, resonance_leaves, slice_support, xi_triangles, HWindow, Interval, RefineOptions};
use crate::dispersion::{resonance_h, EquationParams};
use crate::rng::stream_rng;

/// Ratio within which two dyadic frequencies count as comparable.
pub const FREQ_SIM: f64 = 2.0;
/// Ratio within which modulation sizes (and `H`) count as comparable.
pub const MOD_SIM: f64 = 4.0;
/// Minimal ratio for `N_a >> N_b`.
pub const MUCH_GREATER: f64 = 4.0;
/// Admissible window for `H / (N_max^4 N_min)`.
pub const H_RANGE: (f64, f64) = (1.0 / 8.0, 256.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockError {
    #[error("block is vanishing (admissibility fails)")]
    Vanishing,
    #[error("cells_per_dyad must be at least 4, got {0}")]
    TooCoarse(usize),
    #[error("discretized block has empty support")]
    EmptySupport,
    #[error("invalid block parameter: {0}")]
    BadParameter(String),
}

fn sim(a: f64, b: f64, c: f64) -> bool {
    a.max(b) <= c * a.min(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicBlockSpec {
    pub n: [f64; 3],
    pub h: f64,
    pub l: [f64; 3],
}

fn sorted3(v: [f64; 3]) -> [f64; 3] {
    let mut s = v;
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s
}

impl DyadicBlockSpec {
    pub fn new(n: [f64; 3], h: f64, l: [f64; 3]) -> Result<Self, BlockError> {
        if n.iter().any(|x| !(*x > 0.0 && x.is_finite())) || !(h > 0.0 && h.is_finite()) || l.iter().any(|x| !(*x >= 1.0 && x.is_finite())) {
            return Err(BlockError::BadParameter(format!("N = {n:?}, H = {h}, L = {l:?}")));
        }
        Ok(Self { n, h, l })
    }

    pub fn n_sorted(&self) -> [f64; 3] {
        sorted3(self.n)
    }

    pub fn l_sorted(&self) -> [f64; 3] {
        sorted3(self.l)
    }

    /// `N_max ~ N_med`
    pub fn frequency_admissible(&self) -> bool {
        let [_, med, max] = self.n_sorted();
        sim(max, med, FREQ_SIM)
    }

    /// `L_max ~ max(H, L_med)`
    pub fn modulation_admissible(&self) -> bool {
        let [_, med, max] = self.l_sorted();
        sim(max, self.h.max(med), MOD_SIM)
    }

    /// `H ~ N_max^4 N_min` (only constrained when `N_max >= 1`).
    pub fn resonance_admissible(&self) -> bool {
        let [min, _, max] = self.n_sorted();
        if !self.frequency_admissible() || max < 1.0 {
            return true;
        }
        let r = self.h / (max.powi(4) * min);
        r >= H_RANGE.0 && r <= H_RANGE.1
    }

    /// The two support conditions; a block failing either is identically zero.
    pub fn admissible(&self) -> bool {
        self.frequency_admissible() && self.modulation_admissible()
    }

    /// Relabels the coordinates: slot `j` of the result is coordinate `perm[j]`.
    pub fn permuted(&self, perm: [usize; 3]) -> Self {
        Self { n: perm.map(|j| self.n[j]), h: self.h, l: perm.map(|j| self.l[j]) }
    }

    /// `(++)` family `N = (N, N, 2N)`, `L = (l1, l2, H)` with `H` fitted to the resonance range.
    pub fn plus_plus(n: f64, l1: f64, l2: f64, params: &EquationParams) -> Result<Self, BlockError> {
        let freqs = [n, n, 2.0 * n];
        let h = fitted_h(freqs, [1.0, 1.0, -1.0], params);
        Self::new(freqs, h, [l1, l2, h])
    }

    /// `(+-)` family `N = (n_min, N, N)`, `L = (H, l2, l3)`.
    pub fn plus_minus(n_min: f64, n: f64, l2: f64, l3: f64, params: &EquationParams) -> Result<Self, BlockError> {
        let freqs = [n_min, n, n];
        let h = fitted_h(freqs, [1.0, 1.0, -1.0], params);
        Self::new(freqs, h, [h, l2, l3])
    }
}

/// Dyadic `H` whose window `[H, 4H)` is centred (geometrically) on the median
/// `|h|` over the frequency annuli with the given signs.
fn fitted_h(n: [f64; 3], signs: [f64; 3], params: &EquationParams) -> f64 {
    let m = 64;
    let mut vals = Vec::new();
    for a in 0..m {
        for b in 0..m {
            let x1 = signs[0] * n[0] * (1.0 + (a as f64 + 0.5) / m as f64);
            let x2 = signs[1] * n[1] * (1.0 + (b as f64 + 0.5) / m as f64);
            let x3 = -x1 - x2;
            if x3 * signs[2] > 0.0 && x3.abs() >= n[2] && x3.abs() < 2.0 * n[2] {
                vals.push(resonance_h(x1, x2, params).abs());
            }
        }
    }
    if vals.is_empty() {
        return 1.0;
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = vals[vals.len() / 2];
    2f64.powf((med / 2.0).log2().round()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PlusPlusCoherence,
    PlusMinusCoherence,
    Other,
    Vanishing,
}

pub fn classify_regime(spec: &DyadicBlockSpec) -> Regime {
    if !spec.admissible() {
        return Regime::Vanishing;
    }
    let [nmin, _, nmax] = spec.n_sorted();
    let lmax = spec.l_sorted()[2];
    if sim(nmax, nmin, FREQ_SIM) && sim(lmax, spec.h, MOD_SIM) {
        return Regime::PlusPlusCoherence;
    }
    for j in 0..3 {
        let (a, b) = ((j + 1) % 3, (j + 2) % 3);
        let others_low = spec.l[a] <= MOD_SIM * spec.l[j] && spec.l[b] <= MOD_SIM * spec.l[j];
        if sim(spec.n[a], spec.n[b], FREQ_SIM)
            && spec.n[a].min(spec.n[b]) >= MUCH_GREATER * spec.n[j]
            && sim(spec.h, spec.l[j], MOD_SIM)
            && others_low
        {
            return Regime::PlusMinusCoherence;
        }
    }
    Regime::Other
}

pub fn lemma32_bound(spec: &DyadicBlockSpec) -> Result<f64, BlockError> {
    let [nmin, _, nmax] = spec.n_sorted();
    let [lmin, lmed, _] = spec.l_sorted();
    let pre = lmin.sqrt() / (nmax * nmax);
    Ok(match classify_regime(spec) {
        Regime::Vanishing => return Err(BlockError::Vanishing),
        Regime::PlusPlusCoherence => pre * lmed.sqrt(),
        Regime::PlusMinusCoherence => pre * spec.h.min(nmax / nmin * lmed).sqrt(),
        Regime::Other => pre * spec.h.min(lmed).sqrt(),
    })
}

/// `L_min^{1/2} N_min^{1/2}`
pub fn elementary_upper_bound(spec: &DyadicBlockSpec) -> f64 {
    (spec.l_sorted()[0] * spec.n_sorted()[0]).sqrt()
}

/// Sparse nonnegative-measure trilinear form `sum m(i1, i2, i3) f1(i1) f2(i2) f3(i3)`
/// on three finite index sets with cell measures `measures[j]`. The stored value
/// of an entry is the multiplier integrated over the cell triple.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMultiplier {
    pub measures: [Vec<f64>; 3],
    pub entries: Vec<([u32; 3], f64)>,
}

impl DiscreteMultiplier {
    pub fn new(measures: [Vec<f64>; 3], entries: Vec<([u32; 3], f64)>) -> Result<Self, BlockError> {
        for (idx, v) in &entries {
            for j in 0..3 {
                if idx[j] as usize >= measures[j].len() {
                    return Err(BlockError::BadParameter(format!("entry index {idx:?} out of range")));
                }
            }
            if !v.is_finite() {
                return Err(BlockError::BadParameter("non-finite entry".into()));
            }
        }
        if measures.iter().flatten().any(|m| !(*m > 0.0)) {
            return Err(BlockError::BadParameter("cell measures must be positive".into()));
        }
        Ok(Self { measures, entries })
    }

    pub fn support_len(&self) -> usize {
        self.entries.iter().filter(|e| e.1 != 0.0).count()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.measures[0].len(), self.measures[1].len(), self.measures[2].len()]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { measures: self.measures.clone(), entries: self.entries.iter().map(|(i, v)| (*i, v * c)).collect() }
    }

    /// Entries as an orthonormal-basis tensor `m / sqrt(mu_1 mu_2 mu_3)`.
    fn normalized(&self) -> Vec<([u32; 3], f64)> {
        self.entries
            .iter()
            .map(|(i, v)| {
                let mu = self.measures[0][i[0] as usize] * self.measures[1][i[1] as usize] * self.measures[2][i[2] as usize];
                (*i, v / mu.sqrt())
            })
            .collect()
    }

    /// Permutes the three variable roles: variable `j` of the result is variable `perm[j]`.
    pub fn permuted(&self, perm: [usize; 3]) -> Self {
        Self {
            measures: perm.map(|j| self.measures[j].clone()),
            entries: self.entries.iter().map(|(i, v)| (perm.map(|j| i[j]), *v)).collect(),
        }
    }
}

/// `m(i, j, k)` on `i + j + k = 0 (mod n)` with counting measure.
pub fn cyclic_multiplier(n: usize, m: impl Fn(usize, usize, usize) -> f64) -> DiscreteMultiplier {
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let k = (2 * n - i - j) % n;
            entries.push(([i as u32, j as u32, k as u32], m(i, j, k)));
        }
    }
    DiscreteMultiplier { measures: [vec![1.0; n], vec![1.0; n], vec![1.0; n]], entries }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    /// Best value of the normalized trilinear form found.
    pub lower_bound: f64,
    /// Objective after each update, per restart.
    pub trace: Vec<Vec<f64>>,
    pub restarts: usize,
}

fn contract(t: &[([u32; 3], f64)], f: [&[f64]; 3], free: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let (a, b) = ((free + 1) % 3, (free + 2) % 3);
    for (i, v) in t {
        out[i[free] as usize] += v * f[a][i[a] as usize] * f[b][i[b] as usize];
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Alternating maximization of `|T(f1, f2, f3)|` over unit vectors: each update
/// replaces one factor by the normalized contraction of `T` against the other two.
/// Restart 0 starts from constant vectors, the rest from seeded random ones.
pub fn estimate_multiplier_norm(m: &DiscreteMultiplier, restarts: usize, max_iters: usize, tol: f64, seed: u64) -> NormEstimate {
    let t = m.normalized();
    let dims = m.dims();
    let runs: Vec<(f64, Vec<f64>)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, &[0x4097, r as u64]);
            let mut f: [Vec<f64>; 3] = std::array::from_fn(|j| {
                (0..dims[j]).map(|_| if r == 0 { 1.0 } else { rng.gen_range(-0.25..1.0) }).collect()
            });
            for v in f.iter_mut() {
                normalize(v);
            }
            let mut trace = Vec::new();
            let mut best: f64 = 0.0;
            let mut scratch: [Vec<f64>; 3] = std::array::from_fn(|j| vec![0.0; dims[j]]);
            'outer: for _ in 0..max_iters {
                let prev = best;
                for free in [2usize, 0, 1] {
                    contract(&t, [&f[0], &f[1], &f[2]], free, &mut scratch[free]);
                    let val = normalize(&mut scratch[free]);
                    std::mem::swap(&mut f[free], &mut scratch[free]);
                    if val == 0.0 {
                        trace.push(0.0);
                        break 'outer;
                    }
                    best = best.max(val);
                    trace.push(val);
                }
                if best - prev <= tol * best {
                    break;
                }
            }
            (best, trace)
        })
        .collect();
    let lower_bound = runs.iter().map(|r| r.0).fold(0.0, f64::max);
    NormEstimate { lower_bound, trace: runs.into_iter().map(|r| r.1).collect(), restarts: restarts.max(1) }
}

/// Lattice resolution for [`discretize_block_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockResolution {
    /// Frequency cells on the `N_max` dyad; the frequency spacing is shared by all variables.
    pub xi_cells: usize,
    /// Modulation cells per sign on each `L` dyad.
    pub lambda_cells: usize,
    /// Minimal modulation cells for the variable carrying `L ~ H` in a `(+-)` block,
    /// as a multiple of `N_max / N_min`.
    pub h_variable_factor: f64,
    pub refine_tol: f64,
    pub refine_depth: u32,
}

impl BlockResolution {
    pub fn from_cells_per_dyad(cells_per_dyad: usize) -> Self {
        Self { xi_cells: cells_per_dyad, lambda_cells: (cells_per_dyad / 16).max(4), h_variable_factor: 4.0, refine_tol: 0.02, refine_depth: 10 }
    }
}

#[derive(Debug, Clone)]
struct VarCells {
    xi: Vec<i64>,
    lam: Vec<Interval>,
}

impl VarCells {
    fn len(&self) -> usize {
        self.xi.len() * self.lam.len()
    }
}

fn modulation_cells(l: f64, per_side: usize) -> Vec<Interval> {
    let (lo, hi) = (l - 1.0, 2.0 * l - 1.0);
    let w = (hi - lo) / per_side as f64;
    let mut v: Vec<Interval> = (0..per_side).rev().map(|i| Interval::new(-(lo + (i + 1) as f64 * w), -(lo + i as f64 * w))).collect();
    v.extend((0..per_side).map(|i| Interval::new(lo + i as f64 * w, lo + (i + 1) as f64 * w)));
    v
}

fn frequency_cells(n: f64, dxi: f64) -> Vec<i64> {
    let kmax = (2.0 * n / dxi).ceil() as i64 + 1;
    let mut v: Vec<i64> = (-kmax..=kmax)
        .filter(|&k| {
            let c = (k as f64 + 0.5) * dxi;
            c.abs() >= n && c.abs() < 2.0 * n
        })
        .collect();
    v.sort();
    v
}

/// Indicator of the block `{|xi_j| in [N_j, 2N_j), <lambda_j> in [L_j, 2L_j), |h| in [H, 4H)}` on cells.
pub fn discretize_block(spec: &DyadicBlockSpec, params: &EquationParams, cells_per_dyad: usize) -> Result<DiscreteMultiplier, BlockError> {
    discretize_block_with(spec, params, &BlockResolution::from_cells_per_dyad(cells_per_dyad))
}

pub fn discretize_block_with(spec: &DyadicBlockSpec, params: &EquationParams, res: &BlockResolution) -> Result<DiscreteMultiplier, BlockError> {
    if res.xi_cells < 4 {
        return Err(BlockError::TooCoarse(res.xi_cells));
    }
    if classify_regime(spec) == Regime::Vanishing {
        return Err(BlockError::EmptySupport);
    }
    let [nmin, _, nmax] = spec.n_sorted();
    let dxi = nmax / res.xi_cells as f64;
    let regime = classify_regime(spec);
    let vars: Vec<VarCells> = (0..3)
        .map(|j| {
            let mut per_side = res.lambda_cells;
            if regime == Regime::PlusMinusCoherence && spec.n[j] == nmin && spec.l[j] >= spec.h / MOD_SIM {
                per_side = per_side.max((res.h_variable_factor * nmax / nmin).ceil() as usize);
            }
            VarCells { xi: frequency_cells(spec.n[j], dxi), lam: modulation_cells(spec.l[j], per_side) }
        })
        .collect();
    let third: HashMap<i64, usize> = vars[2].xi.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let window = HWindow { lo: spec.h, hi: 4.0 * spec.h };
    let min_width = vars.iter().flat_map(|v| v.lam.iter().map(|j| j.width())).fold(f64::INFINITY, f64::min);
    let span = |v: &VarCells| (v.lam[0].lo, v.lam[v.lam.len() - 1].hi);
    let spans = [span(&vars[0]), span(&vars[1]), span(&vars[2])];
    let (tlo, thi) = (-(spans[0].1 + spans[1].1 + spans[2].1), -(spans[0].0 + spans[1].0 + spans[2].0));
    let relevant = |lo: f64, hi: f64| hi > tlo && lo < thi && (hi > -window.hi && lo < window.hi) && !(lo > -window.lo && hi < window.lo);
    let opts = RefineOptions { tol: res.refine_tol, min_width, max_depth: res.refine_depth };
    let n_lam = [vars[0].lam.len(), vars[1].lam.len(), vars[2].lam.len()];
    let pairs: Vec<(usize, usize)> = (0..vars[0].xi.len()).flat_map(|a| (0..vars[1].xi.len()).map(move |b| (a, b))).collect();
    let chunks: Vec<Vec<([u32; 3], f64)>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let mut out = Vec::new();
            for tri in xi_triangles(vars[0].xi[a], vars[1].xi[b], dxi) {
                let Some(&c) = third.get(&tri.k3) else { continue };
                let leaves = resonance_leaves(&tri, params, &opts, &relevant);
                if leaves.is_empty() {
                    continue;
                }
                let tmin = leaves.iter().map(|l| l.h[0]).fold(f64::INFINITY, f64::min);
                let tmax = leaves.iter().map(|l| l.h[2]).fold(f64::NEG_INFINITY, f64::max);
                for (i1, j1) in vars[0].lam.iter().enumerate() {
                    for (i2, j2) in vars[1].lam.iter().enumerate() {
                        let (need_lo, need_hi) = (-tmax - j1.hi - j2.hi, -tmin - j1.lo - j2.lo);
                        for (i3, j3) in vars[2].lam.iter().enumerate() {
                            if !j3.intersects(need_lo, need_hi) {
                                continue;
                            }
                            let (slo, shi) = slice_support(j1, j2, j3);
                            let k: f64 = leaves
                                .iter()
                                .filter(|l| l.h[2] > slo && l.h[0] < shi)
                                .map(|l| leaf_mass(l, j1, j2, j3, Some(&window)))
                                .sum();
                            if k > 0.0 {
                                let idx = [(a * n_lam[0] + i1) as u32, (b * n_lam[1] + i2) as u32, (c * n_lam[2] + i3) as u32];
                                out.push((idx, k));
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    let entries: Vec<([u32; 3], f64)> = chunks.into_iter().flatten().collect();
    if entries.is_empty() {
        return Err(BlockError::EmptySupport);
    }
    let measures: [Vec<f64>; 3] = std::array::from_fn(|j| {
        let v = &vars[j];
        (0..v.len()).map(|i| dxi * v.lam[i % v.lam.len()].width()).collect()
    });
    DiscreteMultiplier::new(measures, entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub spec: DyadicBlockSpec,
    pub regime: Regime,
    pub estimate: f64,
    pub bound: f64,
    pub ratio: f64,
    pub elementary: f64,
    pub support: usize,
}

/// Least-squares exponents of `estimate ~ L_min^a L_med^b N_max^c` within one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFit {
    pub regime: Regime,
    pub l_min: Option<f64>,
    pub l_med: Option<f64>,
    pub n_max: Option<f64>,
    /// `max / min` of estimate/bound across the regime's rows.
    pub ratio_spread: f64,
    /// `max` of estimate/bound across the regime's rows.
    pub c_scan: f64,
}

/// Location of the `min(H, (N_max/N_min) L_med)` switch in a `(+-)` family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub predicted_l_med: f64,
    /// Knee of the least-squares fit `log est = a + min(log L_med, log L*) / 2`.
    pub detected_l_med: Option<f64>,
    pub slope_before: f64,
    pub slope_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub rows: Vec<BlockRow>,
    pub fits: Vec<RegimeFit>,
    pub crossovers: Vec<Crossover>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { restarts: 16, max_iters: 200, tol: 1e-10 }
    }
}

pub fn verify_block_estimates(
    scan: &[DyadicBlockSpec],
    params: &EquationParams,
    cells_per_dyad: usize,
    restarts: usize,
    seed: u64,
) -> Result<BlockReport, BlockError> {
    let opts = EstimatorOptions { restarts, ..EstimatorOptions::default() };
    verify_block_estimates_with(scan, params, &BlockResolution::from_cells_per_dyad(cells_per_dyad), &opts, seed)
}

pub fn verify_block_estimates_with(
    scan: &[DyadicBlockSpec],
    params: &EquationParams,
    res: &BlockResolution,
    est: &EstimatorOptions,
    seed: u64,
) -> Result<BlockReport, BlockError> {
    let mut rows = Vec::with_capacity(scan.len());
    for (i, spec) in scan.iter().enumerate() {
        let bound = lemma32_bound(spec)?;
        let m = discretize_block_with(spec, params, res)?;
        let e = estimate_multiplier_norm(&m, est.restarts, est.max_iters, est.tol, crate::rng::stream_seed(seed, &[0xb7, i as u64]));
        rows.push(BlockRow {
            spec: *spec,
            regime: classify_regime(spec),
            estimate: e.lower_bound,
            bound,
            ratio: e.lower_bound / bound,
            elementary: elementary_upper_bound(spec),
            support: m.support_len(),
        });
    }
    let mut fits = Vec::new();
    for regime in [Regime::PlusPlusCoherence, Regime::PlusMinusCoherence, Regime::Other] {
        let sel: Vec<&BlockRow> = rows.iter().filter(|r| r.regime == regime).collect();
        if sel.is_empty() {
            continue;
        }
        let cols: [Vec<f64>; 3] = [
            sel.iter().map(|r| r.spec.l_sorted()[0].ln()).collect(),
            sel.iter().map(|r| r.spec.l_sorted()[1].ln()).collect(),
            sel.iter().map(|r| r.spec.n_sorted()[2].ln()).collect(),
        ];
        let y: Vec<f64> = sel.iter().map(|r| r.estimate.ln()).collect();
        let coef = regress(&cols, &y);
        let ratios: Vec<f64> = sel.iter().map(|r| r.ratio).collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        fits.push(RegimeFit { regime, l_min: coef[0], l_med: coef[1], n_max: coef[2], ratio_spread: hi / lo, c_scan: hi });
    }
    let crossovers = detect_crossovers(&rows);
    Ok(BlockReport { rows, fits, crossovers })
}

/// Multiple regression with an intercept; columns without spread get `None`.
fn regress(cols: &[Vec<f64>; 3], y: &[f64]) -> [Option<f64>; 3] {
    let active: Vec<usize> = (0..3)
        .filter(|&c| {
            let v = &cols[c];
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min) > 1e-12
        })
        .collect();
    let mut out = [None; 3];
    if active.is_empty() || y.len() < active.len() + 1 {
        return out;
    }
    let a = DMatrix::from_fn(y.len(), active.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[active[j - 1]][i] });
    let b = DVector::from_column_slice(y);
    let ata = a.transpose() * &a;
    let Some(chol) = ata.clone().cholesky() else { return out };
    let l = chol.l();
    if (0..ata.nrows()).any(|i| l[(i, i)] * l[(i, i)] < 1e-10 * ata[(i, i)]) {
        return out;
    }
    let sol = chol.solve(&(a.transpose() * b));
    for (j, &c) in active.iter().enumerate() {
        out[c] = Some(sol[j + 1]);
    }
    out
}

/// Best knee `k` for `y = a + min(x, k) / 2`, searched on a grid of step 0.01 over the data range.
fn hinge_fit(pts: &[(f64, f64)]) -> Option<f64> {
    let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if !(x1 > x0) {
        return None;
    }
    let steps = ((x1 - x0) / 0.01).ceil() as usize;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..=steps {
        let k = x0 + (x1 - x0) * i as f64 / steps as f64;
        let a = pts.iter().map(|p| p.1 - 0.5 * p.0.min(k)).sum::<f64>() / pts.len() as f64;
        let sse: f64 = pts.iter().map(|p| (p.1 - a - 0.5 * p.0.min(k)).powi(2)).sum();
        if best.map_or(true, |b| sse < b.1) {
            best = Some((k, sse));
        }
    }
    best.map(|b| b.0)
}

fn detect_crossovers(rows: &[BlockRow]) -> Vec<Crossover> {
    let mut groups: Vec<(DyadicBlockSpec, Vec<&BlockRow>)> = Vec::new();
    for r in rows.iter().filter(|r| r.regime == Regime::PlusMinusCoherence) {
        let key = |s: &DyadicBlockSpec| (s.n_sorted(), s.h, s.l_sorted()[0], s.l_sorted()[2]);
        match groups.iter_mut().find(|g| key(&g.0) == key(&r.spec)) {
            Some(g) => g.1.push(r),
            None => groups.push((r.spec, vec![r])),
        }
    }
    let mut out = Vec::new();
    for (spec, mut g) in groups {
        if g.len() < 3 {
            continue;
        }
        g.sort_by(|a, b| a.spec.l_sorted()[1].partial_cmp(&b.spec.l_sorted()[1]).unwrap());
        let [nmin, _, nmax] = spec.n_sorted();
        let predicted = spec.h * nmin / nmax;
        let slopes: Vec<(f64, f64)> = g
            .windows(2)
            .map(|w| {
                let (x0, x1) = (w[0].spec.l_sorted()[1], w[1].spec.l_sorted()[1]);
                ((x0 * x1).sqrt(), (w[1].estimate / w[0].estimate).ln() / (x1 / x0).ln())
            })
            .collect();
        let pts: Vec<(f64, f64)> = g.iter().map(|r| (r.spec.l_sorted()[1].ln(), r.estimate.ln())).collect();
        let detected = hinge_fit(&pts).map(f64::exp);
        let mean = |v: Vec<f64>| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let slope_before = mean(slopes.iter().filter(|s| s.0 < predicted).map(|s| s.1).collect());
        let slope_after = mean(slopes.iter().filter(|s| s.0 > predicted).map(|s| s.1).collect());
        out.push(Crossover { predicted_l_med: predicted, detected_l_med: detected, slope_before, slope_after });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: [f64; 3], h: f64, l: [f64; 3]) -> DyadicBlockSpec {
        DyadicBlockSpec::new(n, h, l).unwrap()
    }

    fn kw() -> EquationParams {
        EquationParams::kawahara(0.0, 1.0).unwrap()
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_regime(&spec([4.0, 4.0, 4.0], 1024.0, [1.0, 4.0, 1024.0])), Regime::PlusPlusCoherence);
        assert_eq!(classify_regime(&spec([1.0, 8.0, 8.0], 4096.0, [4096.0, 16.0, 4.0])), Regime::PlusMinusCoherence);
        assert_eq!(classify_regime(&spec([1.0, 2.0, 8.0], 4096.0, [4096.0, 1.0, 1.0])), Regime::Vanishing);
        assert_eq!(classify_regime(&spec([4.0, 4.0, 4.0], 1024.0, [1.0, 4.0, 16.0])), Regime::Vanishing);
        assert_eq!(classify_regime(&spec([2.0, 8.0, 8.0], 8192.0, [64.0, 8192.0, 1.0])), Regime::Other);
        assert_eq!(classify_regime(&spec([8.0, 8.0, 1.0], 4096.0, [4.0, 16.0, 4096.0])), Regime::PlusMinusCoherence);
    }

    #[test]
    fn bound_examples() {
        let pp = spec([8.0, 8.0, 8.0], 32768.0, [1.0, 4.0, 32768.0]);
        assert!((lemma32_bound(&pp).unwrap() - 0.03125).abs() < 1e-15);
        let other = spec([1.0, 4.0, 4.0], 16.0, [1.0, 64.0, 64.0]);
        assert_eq!(classify_regime(&other), Regime::Other);
        assert!((lemma32_bound(&other).unwrap() - 0.25).abs() < 1e-15);
        let pm = spec([1.0, 8.0, 8.0], 1024.0, [1024.0, 2.0, 1.0]);
        assert_eq!(classify_regime(&pm), Regime::PlusMinusCoherence);
        assert!((lemma32_bound(&pm).unwrap() - 0.0625).abs() < 1e-15);
        assert_eq!(lemma32_bound(&spec([1.0, 2.0, 8.0], 4096.0, [1.0, 1.0, 4096.0])), Err(BlockError::Vanishing));
        assert_eq!(elementary_upper_bound(&spec([9.0, 12.0, 12.0], 1.0, [4.0, 5.0, 6.0])), 6.0);
        assert_eq!(elementary_upper_bound(&pp.permuted([2, 0, 1])), elementary_upper_bound(&pp));
    }

    #[test]
    fn elementary_bound_dominates_on_admissible_scan() {
        let mut worst = f64::INFINITY;
        for &n in &[1.0f64, 2.0, 4.0, 8.0, 16.0] {
            for &nmin_f in &[1.0f64, 0.25, 0.125] {
                for &lmed in &[1.0f64, 4.0, 64.0] {
                    let nmin = (n * nmin_f).max(1.0);
                    let h = n.powi(4) * nmin;
                    let s = spec([nmin, n, n], h, [h, lmed.min(h), 1.0]);
                    if let Ok(b) = lemma32_bound(&s) {
                        worst = worst.min(elementary_upper_bound(&s) / b);
                    }
                }
            }
        }
        assert!(worst >= 1.0 / 16.0, "{worst}");
    }

    #[test]
    fn cyclic_constant_multiplier_norm_is_sqrt_n() {
        for n in [2usize, 3, 5, 8] {
            let m = cyclic_multiplier(n, |_, _, _| 1.0);
            let e = estimate_multiplier_norm(&m, 16, 100, 1e-12, 1);
            assert!((e.lower_bound - (n as f64).sqrt()).abs() < 1e-10, "n = {n}: {}", e.lower_bound);
            for tr in &e.trace {
                assert!(tr.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
            }
        }
    }

    #[test]
    fn estimator_homogeneity_single_point_and_rank_one() {
        let m = cyclic_multiplier(6, |i, j, k| 1.0 + ((i * 7 + j * 3 + k) % 5) as f64);
        let e1 = estimate_multiplier_norm(&m, 16, 200, 1e-14, 3).lower_bound;
        let e2 = estimate_multiplier_norm(&m.scaled(-2.5), 16, 200, 1e-14, 3).lower_bound;
        assert!((e2 - 2.5 * e1).abs() < 1e-12 * e1);
        let single = DiscreteMultiplier::new([vec![0.5, 2.0], vec![3.0], vec![0.25]], vec![([1, 0, 0], 1.5)]).unwrap();
        let e = estimate_multiplier_norm(&single, 4, 10, 1e-14, 0).lower_bound;
        assert!((e - 1.5 / (2.0f64 * 3.0 * 0.25).sqrt()).abs() < 1e-14);
        // rank one: a (x) b (x) c
        let (a, b, c) = ([1.0, 2.0, 0.5], [0.3, 0.4], [2.0, 1.0, 1.0, 3.0]);
        let mut entries = Vec::new();
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..4 {
                    entries.push(([i as u32, j as u32, k as u32], a[i] * b[j] * c[k]));
                }
            }
        }
        let r1 = DiscreteMultiplier::new([vec![1.0; 3], vec![1.0; 2], vec![1.0; 4]], entries).unwrap();
        let e = estimate_multiplier_norm(&r1, 1, 1, 0.0, 0);
        let nrm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((e.lower_bound - nrm(&a) * nrm(&b) * nrm(&c)).abs() < 1e-12);
        assert_eq!(e.trace[0].len(), 3);
    }

    #[test]
    fn discretized_support_lies_on_hyperplane_and_block() {
        let p = kw();
        let s = DyadicBlockSpec::plus_plus(2.0, 1.0, 4.0, &p).unwrap();
        assert_eq!(classify_regime(&s), Regime::PlusPlusCoherence);
        let m = discretize_block(&s, &p, 8).unwrap();
        assert!(m.support_len() > 0);
        assert!(m.entries.iter().all(|e| e.1 > 0.0));
        let v = discretize_block(&spec([1.0, 2.0, 8.0], 4096.0, [1.0, 1.0, 4096.0]), &p, 8);
        assert_eq!(v, Err(BlockError::EmptySupport));
        assert_eq!(discretize_block(&s, &p, 2), Err(BlockError::TooCoarse(2)));
    }

    #[test]
    fn comparison_principle_for_nested_blocks() {
        let p = kw();
        let s = DyadicBlockSpec::plus_plus(2.0, 1.0, 4.0, &p).unwrap();
        let big = discretize_block(&s, &p, 8).unwrap();
        // drop entries: a sub-indicator
        let small = DiscreteMultiplier { measures: big.measures.clone(), entries: big.entries.iter().cloned().enumerate().filter(|(i, _)| i % 3 != 0).map(|x| x.1).collect() };
        let eb = estimate_multiplier_norm(&big, 16, 200, 1e-12, 5).lower_bound;
        let es = estimate_multiplier_norm(&small, 16, 200, 1e-12, 5).lower_bound;
        assert!(es <= eb * (1.0 + 1e-9), "{es} > {eb}");
    }

    #[test]
    fn regression_recovers_exact_exponents() {
        let x = [[0.0, 1.0, 2.0, 0.0, 1.0, 3.0], [0.0, 0.0, 1.0, 2.0, 2.0, 1.0], [1.0, 2.0, 1.0, 1.0, 3.0, 0.0]];
        let y: Vec<f64> = (0..6).map(|i| 0.3 + 0.5 * x[0][i] + 0.5 * x[1][i] - 2.0 * x[2][i]).collect();
        let cols = [x[0].to_vec(), x[1].to_vec(), x[2].to_vec()];
        let r = regress(&cols, &y);
        for (got, want) in r.iter().zip([0.5, 0.5, -2.0]) {
            assert!((got.unwrap() - want).abs() < 1e-12, "{r:?}");
        }
        // a constant column drops out, collinear columns give no fit
        let r = regress(&[x[0].to_vec(), vec![2.0; 6], x[2].to_vec()], &y);
        assert!(r[1].is_none() && r[0].is_some());
        assert_eq!(regress(&[x[0].to_vec(), x[0].iter().map(|v| 2.0 * v).collect(), x[2].to_vec()], &y), [None; 3]);
    }

    #[test]
    fn permutation_covariance() {
        let p = kw();
        let s = DyadicBlockSpec::plus_plus(2.0, 1.0, 4.0, &p).unwrap();
        let base = estimate_multiplier_norm(&discretize_block(&s, &p, 8).unwrap(), 16, 200, 1e-12, 2).lower_bound;
        for perm in [[1, 0, 2], [2, 0, 1], [0, 2, 1]] {
            let ps = s.permuted(perm);
            assert_eq!(classify_regime(&ps), Regime::PlusPlusCoherence);
            let e = estimate_multiplier_norm(&discretize_block(&ps, &p, 8).unwrap(), 16, 200, 1e-12, 2).lower_bound;
            assert!((e / base - 1.0).abs() < 0.02, "{perm:?}: {e} vs {base}");
        }
    }
}
