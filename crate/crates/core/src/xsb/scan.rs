//! Ensemble scans of the multilinear ratios across frequency scales.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::continuum::{band_cell_field, block_cell_field, cell_product, CellField, ProductOptions};
use super::XsbError;
use crate::dispersion::EquationParams;
use crate::fit::loglog_slope;
use crate::rng::{stream_rng, stream_seed};
use crate::spectral::NormSpec;

/// Slopes within this of zero count as bounded.
pub const SLOPE_TOL: f64 = 0.1;

const MODULATIONS: [f64; 3] = [1.0, 2.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimateKind {
    Bilinear { b: f64 },
    Trilinear { b: f64 },
    Asym { eps: f64 },
}

impl EstimateKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimateKind::Bilinear { .. } => "bilinear",
            EstimateKind::Trilinear { .. } => "trilinear",
            EstimateKind::Asym { .. } => "asym",
        }
    }

    /// `b` for the bilinear and trilinear ratios, `eps` for the asymmetric one.
    pub fn parameter(&self) -> f64 {
        match *self {
            EstimateKind::Bilinear { b } | EstimateKind::Trilinear { b } => b,
            EstimateKind::Asym { eps } => eps,
        }
    }

    fn arity(&self) -> usize {
        match self {
            EstimateKind::Trilinear { .. } => 3,
            _ => 2,
        }
    }
}

/// Ensemble sizes: `random` members on full dyadic blocks, `adversarial` members on
/// narrow opposite-sign bands at `+-N` whose product lands at low frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanEnsemble {
    pub random: usize,
    pub adversarial: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanResolution {
    /// Frequency cells across the smallest block of a member.
    pub xi_cells: usize,
    /// Cap on frequency cells across the largest block, unless the smallest block would be empty.
    pub max_rows: usize,
    pub band_width: f64,
    /// Frequency cells across an adversarial band.
    pub band_cells: usize,
    pub product: ProductOptions,
}

impl Default for ScanResolution {
    fn default() -> Self {
        Self { xi_cells: 8, max_rows: 128, band_width: 0.5, band_cells: 32, product: ProductOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub estimate: String,
    pub s: f64,
    pub b: f64,
    pub n: f64,
    pub regime: String,
    pub seed: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub s: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    pub slopes: Vec<SlopeFit>,
    /// Slopes of the maximum over members whose largest frequency is exactly `N`.
    pub scale_slopes: Vec<SlopeFit>,
    /// Linear interpolation in `s` of where the slope crosses `SLOPE_TOL`.
    pub threshold_s: Option<f64>,
}

struct Member {
    regime: &'static str,
    scale: f64,
    seed: u64,
    fields: Vec<CellField>,
}

fn dyadic_ladder(top: f64) -> Vec<f64> {
    let mut v = vec![1.0];
    while v[v.len() - 1] * 2.0 <= top {
        v.push(v[v.len() - 1] * 2.0);
    }
    v
}

/// Nondecreasing dyadic tuples of length `arity` from `ladder`.
fn patterns(ladder: &[f64], arity: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = ladder.iter().map(|&n| vec![n]).collect();
    for _ in 1..arity {
        out = out
            .into_iter()
            .flat_map(|p| {
                let last = *p.last().unwrap();
                ladder.iter().filter(move |&&n| n >= last).map(move |&n| {
                    let mut q = p.clone();
                    q.push(n);
                    q
                })
            })
            .collect();
    }
    out
}

fn random_member(
    pattern: &[f64],
    params: &EquationParams,
    res: &ScanResolution,
    seed: u64,
) -> Result<Member, XsbError> {
    let mut rng = stream_rng(seed, &[]);
    let nmin = pattern[0];
    let nmax = pattern[pattern.len() - 1];
    let dxi = (nmin / res.xi_cells as f64).max(nmax / res.max_rows as f64).min(nmin);
    let shape: Vec<(i8, f64)> = pattern
        .iter()
        .map(|_| (if rng.gen::<bool>() { 1 } else { -1 }, MODULATIONS[rng.gen_range(0..MODULATIONS.len())]))
        .collect();
    let fields = pattern
        .iter()
        .zip(shape)
        .map(|(&n, (sign, l))| block_cell_field(n, l, sign, dxi, params, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Member { regime: "random", scale: nmax, seed, fields })
}

fn adversarial_member(
    n: f64,
    width: f64,
    arity: usize,
    params: &EquationParams,
    res: &ScanResolution,
    seed: u64,
) -> Result<Member, XsbError> {
    let mut rng = stream_rng(seed, &[]);
    let dxi = width / res.band_cells as f64;
    let fields = (0..arity)
        .map(|j| band_cell_field(n, width, 1.0, if j % 2 == 0 { 1 } else { -1 }, dxi, params, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Member { regime: "adversarial", scale: n, seed, fields })
}

fn build_members(
    kind: &EstimateKind,
    ensemble: &ScanEnsemble,
    n_list: &[f64],
    params: &EquationParams,
    seed: u64,
    res: &ScanResolution,
) -> Result<Vec<Member>, XsbError> {
    let top = n_list.iter().cloned().fold(0.0, f64::max);
    let pats = patterns(&dyadic_ladder(top), kind.arity());
    let mut members = Vec::new();
    for i in 0..ensemble.random {
        members.push(random_member(&pats[i % pats.len()], params, res, stream_seed(seed, &[0x7a, i as u64]))?);
    }
    for i in 0..ensemble.adversarial {
        let n = n_list[i % n_list.len()];
        let width = res.band_width * 0.5f64.powi(((i / n_list.len()) % 3) as i32);
        members.push(adversarial_member(n, width, kind.arity(), params, res, stream_seed(seed, &[0xad, i as u64]))?);
    }
    Ok(members)
}

/// Ratio of a member as a function of `s`, with the products formed once.
enum Prepared {
    Bilinear { inputs: Vec<CellField>, out: CellField },
    Asym { pair: [CellField; 2], out: CellField },
}

fn prepare(kind: &EstimateKind, m: &Member, opts: &ProductOptions) -> Result<Prepared, XsbError> {
    let f = &m.fields;
    Ok(match kind {
        EstimateKind::Bilinear { .. } => Prepared::Bilinear { inputs: f.clone(), out: cell_product(&f[0], &f[1], opts)? },
        EstimateKind::Trilinear { .. } => {
            Prepared::Bilinear { inputs: f.clone(), out: cell_product(&cell_product(&f[0], &f[1], opts)?, &f[2], opts)? }
        }
        EstimateKind::Asym { .. } => Prepared::Asym { pair: [f[0].clone(), f[1].clone()], out: cell_product(&f[0], &f[1], opts)? },
    })
}

fn evaluate(kind: &EstimateKind, p: &Prepared, s: f64) -> f64 {
    match (kind, p) {
        (EstimateKind::Bilinear { b } | EstimateKind::Trilinear { b }, Prepared::Bilinear { inputs, out }) => {
            let norm = NormSpec::new(s, *b);
            let den: f64 = inputs.iter().map(|f| f.norm(&norm)).product();
            out.derivative_norm(&NormSpec::new(s, b - 1.0)) / den
        }
        (EstimateKind::Asym { eps }, Prepared::Asym { pair, out }) => {
            let num = out.norm(&NormSpec::new(0.0, 0.0));
            let low = NormSpec::new(-0.5, 0.5 - eps);
            let high = NormSpec::new(s, 0.5 + eps);
            let r01 = num / (pair[0].norm(&low) * pair[1].norm(&high));
            let r10 = num / (pair[1].norm(&low) * pair[0].norm(&high));
            r01.max(r10)
        }
        _ => unreachable!("prepared with a different estimate"),
    }
}

/// Max ratio per `(s, N)` over ensemble members whose frequencies are all `<= N`,
/// the log-log slope in `N` per `s`, and the interpolated `s` where the slope
/// crosses `SLOPE_TOL`.
pub fn ratio_scaling_scan(
    kind: &EstimateKind,
    ensemble: &ScanEnsemble,
    s_list: &[f64],
    n_list: &[f64],
    params: &EquationParams,
    seed: u64,
    res: &ScanResolution,
) -> Result<ScanTable, XsbError> {
    if n_list.len() < 2 || n_list.iter().any(|&n| !(n >= 1.0 && n.log2().fract() == 0.0)) {
        return Err(XsbError::BadParameter("N list must hold at least two dyadics >= 1".into()));
    }
    if ensemble.random + ensemble.adversarial == 0 {
        return Err(XsbError::BadParameter("empty ensemble".into()));
    }
    let members = build_members(kind, ensemble, n_list, params, seed, res)?;
    let prepared = members.par_iter().map(|m| prepare(kind, m, &res.product)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    let mut scale_slopes = Vec::new();
    for &s in s_list {
        let ratios: Vec<f64> = prepared.iter().map(|p| evaluate(kind, p, s)).collect();
        let mut maxima = Vec::new();
        for &n in n_list {
            let best = members
                .iter()
                .zip(&ratios)
                .filter(|(m, _)| m.scale <= n)
                .fold(None::<(&Member, f64)>, |acc, (m, &r)| match acc {
                    Some((_, br)) if br >= r => acc,
                    _ => Some((m, r)),
                });
            let Some((m, r)) = best else { continue };
            maxima.push((n, r));
            rows.push(ScanRow { estimate: kind.label().into(), s, b: kind.parameter(), n, regime: m.regime.into(), seed: m.seed, ratio: r });
        }
        let (x, y): (Vec<f64>, Vec<f64>) = maxima.into_iter().unzip();
        if let Some(slope) = loglog_slope(&x, &y) {
            slopes.push(SlopeFit { s, slope });
        }
        let (x, y): (Vec<f64>, Vec<f64>) = n_list
            .iter()
            .filter_map(|&n| {
                let r = members.iter().zip(&ratios).filter(|(m, _)| m.scale == n).map(|(_, &r)| r).fold(f64::NAN, f64::max);
                (r > 0.0).then_some((n, r))
            })
            .unzip();
        if let Some(slope) = loglog_slope(&x, &y) {
            scale_slopes.push(SlopeFit { s, slope });
        }
    }
    Ok(ScanTable { rows, threshold_s: threshold(&slopes), slopes, scale_slopes })
}

fn threshold(slopes: &[SlopeFit]) -> Option<f64> {
    let mut v = slopes.to_vec();
    v.sort_by(|a, b| a.s.total_cmp(&b.s));
    v.windows(2).find_map(|w| {
        let (a, b) = (w[0].slope - SLOPE_TOL, w[1].slope - SLOPE_TOL);
        if (a > 0.0) != (b > 0.0) {
            Some(w[0].s + (w[1].s - w[0].s) * a / (a - b))
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw() -> EquationParams {
        EquationParams::kawahara(0.0, 1.0).unwrap()
    }

    #[test]
    fn pattern_counts() {
        assert_eq!(patterns(&dyadic_ladder(8.0), 2).len(), 10);
        assert_eq!(patterns(&dyadic_ladder(8.0), 3).len(), 20);
        assert_eq!(dyadic_ladder(6.0), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn threshold_interpolates() {
        let s = [SlopeFit { s: -3.0, slope: 1.1 }, SlopeFit { s: -2.0, slope: 0.6 }, SlopeFit { s: -1.0, slope: 0.0 }];
        let t = threshold(&s).unwrap();
        assert!((t - (-2.0 + 0.5 / 0.6)).abs() < 1e-12);
        assert_eq!(threshold(&s[2..]), None);
    }

    #[test]
    fn bad_inputs() {
        let k = EstimateKind::Bilinear { b: 0.6 };
        let e = ScanEnsemble { random: 2, adversarial: 0 };
        let r = ScanResolution::default();
        assert!(ratio_scaling_scan(&k, &e, &[-1.0], &[4.0], &kw(), 1, &r).is_err());
        assert!(ratio_scaling_scan(&k, &e, &[-1.0], &[4.0, 6.0], &kw(), 1, &r).is_err());
        assert!(ratio_scaling_scan(&k, &ScanEnsemble { random: 0, adversarial: 0 }, &[-1.0], &[2.0, 4.0], &kw(), 1, &r).is_err());
    }

    #[test]
    fn rescaled_amplitudes_leave_table_unchanged() {
        let k = EstimateKind::Bilinear { b: 0.6 };
        let e = ScanEnsemble { random: 4, adversarial: 2 };
        let res = ScanResolution { xi_cells: 4, max_rows: 16, ..ScanResolution::default() };
        let members = build_members(&k, &e, &[1.0, 2.0], &kw(), 3, &res).unwrap();
        for m in &members {
            let p = prepare(&k, m, &res.product).unwrap();
            let scaled = Member { regime: m.regime, scale: m.scale, seed: m.seed, fields: m.fields.iter().map(|f| f.scaled(7.0)).collect() };
            let q = prepare(&k, &scaled, &res.product).unwrap();
            for s in [-2.5, -1.0, 0.0] {
                assert!((evaluate(&k, &q, s) / evaluate(&k, &p, s) - 1.0).abs() < 1e-10);
            }
        }
    }
}
