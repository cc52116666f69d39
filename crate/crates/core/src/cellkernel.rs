//! Exact interaction measure of three space-time cells on the hyperplane
//! `xi_1 + xi_2 + xi_3 = 0`, `tau_1 + tau_2 + tau_3 = 0`.
//!
//! A cell is a frequency interval `[k dxi, (k+1) dxi)` times a modulation interval
//! `J` for `lambda = tau - p(xi)`. On the hyperplane the modulations satisfy
//! `lambda_1 + lambda_2 + lambda_3 = -h(xi)`, so the measure of a cell triple is
//! `int A(h(xi_1, xi_2)) d xi_1 d xi_2` over a triangle of the `(xi_1, xi_2)` plane, where
//! `A(t)` is the area of `{(l1, l2) in J1 x J2 : -t - l1 - l2 in J3}`.
//! `h` is replaced by its linear interpolant on adaptively refined sub-triangles, which
//! turns the integral into a hat density against a piecewise quadratic and is
//! integrated exactly.

use serde::{Deserialize, Serialize};

use crate::dispersion::EquationParams;

/// Half-open interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(hi >= lo);
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn reflected(&self) -> Self {
        Self { lo: -self.hi, hi: -self.lo }
    }

    pub fn intersects(&self, lo: f64, hi: f64) -> bool {
        hi > self.lo && lo < self.hi
    }
}

/// Restriction `|t| in [lo, hi)` on the resonance value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HWindow {
    pub lo: f64,
    pub hi: f64,
}

impl HWindow {
    fn contains(&self, t: f64) -> bool {
        let a = t.abs();
        a >= self.lo && a < self.hi
    }

    fn edges(&self) -> [f64; 4] {
        [-self.hi, -self.lo, self.lo, self.hi]
    }

    fn meets(&self, lo: f64, hi: f64) -> bool {
        Interval::new(-self.hi, -self.lo).intersects(lo, hi) || Interval::new(self.lo, self.hi).intersects(lo, hi)
    }
}

#[inline]
fn ramp2(u: f64) -> f64 {
    if u > 0.0 {
        0.5 * u * u
    } else {
        0.0
    }
}

/// Area of `{(x, y) in J1 x J2 : x + y <= s}`.
pub fn lambda_sum_cdf(j1: &Interval, j2: &Interval, s: f64) -> f64 {
    if s <= j1.lo + j2.lo {
        return 0.0;
    }
    if s >= j1.hi + j2.hi {
        return j1.width() * j2.width();
    }
    ramp2(s - j1.lo - j2.lo) - ramp2(s - j1.hi - j2.lo) - ramp2(s - j1.lo - j2.hi) + ramp2(s - j1.hi - j2.hi)
}

/// `A(t)`: area of `{(l1, l2) in J1 x J2 : -t - l1 - l2 in J3}`.
pub fn slice_area(j1: &Interval, j2: &Interval, j3: &Interval, t: f64) -> f64 {
    (lambda_sum_cdf(j1, j2, -t - j3.lo) - lambda_sum_cdf(j1, j2, -t - j3.hi)).max(0.0)
}

fn slice_breakpoints(j1: &Interval, j2: &Interval, j3: &Interval) -> [f64; 8] {
    let c = [j1.lo + j2.lo, j1.hi + j2.lo, j1.lo + j2.hi, j1.hi + j2.hi];
    [
        -j3.lo - c[0],
        -j3.lo - c[1],
        -j3.lo - c[2],
        -j3.lo - c[3],
        -j3.hi - c[0],
        -j3.hi - c[1],
        -j3.hi - c[2],
        -j3.hi - c[3],
    ]
}

/// Values `t` for which `A(t) > 0`: the open interval `(-(b1+b2+b3), -(a1+a2+a3))`.
pub fn slice_support(j1: &Interval, j2: &Interval, j3: &Interval) -> (f64, f64) {
    (-(j1.hi + j2.hi + j3.hi), -(j1.lo + j2.lo + j3.lo))
}

/// Sub-triangle on which `h` is taken linear; `h` holds vertex values sorted ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leaf {
    pub area: f64,
    pub h: [f64; 3],
}

impl Leaf {
    pub fn range(&self) -> (f64, f64) {
        (self.h[0], self.h[2])
    }
}

/// `int rho(t) A(t) W(t) dt`, with `rho` the push-forward of area under the
/// linear interpolant of `h` (a hat density on `[h0, h2]` peaking at `h1`).
pub fn leaf_mass(leaf: &Leaf, j1: &Interval, j2: &Interval, j3: &Interval, window: Option<&HWindow>) -> f64 {
    let [v0, v1, v2] = leaf.h;
    let (slo, shi) = slice_support(j1, j2, j3);
    if v2 <= slo || v0 >= shi {
        return 0.0;
    }
    if let Some(w) = window {
        if !w.meets(v0, v2.max(v0 + f64::MIN_POSITIVE)) {
            return 0.0;
        }
    }
    let win = |t: f64| window.map_or(1.0, |w| if w.contains(t) { 1.0 } else { 0.0 });
    let scale = v0.abs().max(v2.abs()).max(1.0);
    if v2 - v0 <= 1e-13 * scale {
        let t = (v0 + v1 + v2) / 3.0;
        return leaf.area * slice_area(j1, j2, j3, t) * win(t);
    }
    let peak = 2.0 * leaf.area / (v2 - v0);
    let rho = |t: f64| {
        if t <= v1 {
            if v1 > v0 {
                peak * (t - v0) / (v1 - v0)
            } else {
                peak
            }
        } else if v2 > v1 {
            peak * (v2 - t) / (v2 - v1)
        } else {
            peak
        }
    };
    let lo = v0.max(slo);
    let hi = v2.min(shi);
    let mut buf = [0.0f64; 15];
    let mut len = 0;
    let mut push = |x: f64| {
        buf[len] = x;
        len += 1;
    };
    push(lo);
    push(hi);
    if v1 > lo && v1 < hi {
        push(v1);
    }
    for b in slice_breakpoints(j1, j2, j3) {
        if b > lo && b < hi {
            push(b);
        }
    }
    if let Some(w) = window {
        for b in w.edges() {
            if b > lo && b < hi {
                push(b);
            }
        }
    }
    let pts = &mut buf[..len];
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let m = 0.5 * (a + b);
        if win(m) == 0.0 {
            continue;
        }
        let f = |t: f64| rho(t) * slice_area(j1, j2, j3, t);
        acc += (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    }
    acc
}

/// Frequency triangle of the `(xi_1, xi_2)` plane for cells `k1`, `k2` whose third
/// frequency lies in cell `k3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiTriangle {
    pub k3: i64,
    pub verts: [(f64, f64); 3],
}

/// The two triangles of the square `C_{k1} x C_{k2}` cut by `xi_1 + xi_2 = const`:
/// `k3 = -(k1 + k2) - 1` (lower) and `k3 = -(k1 + k2) - 2` (upper).
pub fn xi_triangles(k1: i64, k2: i64, dxi: f64) -> [XiTriangle; 2] {
    let (x1, x2) = (k1 as f64 * dxi, k2 as f64 * dxi);
    let (y1, y2) = ((k1 + 1) as f64 * dxi, (k2 + 1) as f64 * dxi);
    [
        XiTriangle { k3: -(k1 + k2) - 1, verts: [(x1, x2), (y1, x2), (x1, y2)] },
        XiTriangle { k3: -(k1 + k2) - 2, verts: [(y1, x2), (x1, y2), (y1, y2)] },
    ]
}

/// `h(xi_1, xi_2, -xi_1 - xi_2)`
#[inline]
pub fn h_plane(params: &EquationParams, a: f64, b: f64) -> f64 {
    params.p(a) + params.p(b) - params.p(a + b)
}

fn p2(params: &EquationParams, x: f64) -> f64 {
    -20.0 * params.beta() * x * x * x + 6.0 * params.alpha() * x
}

/// Generalized resonance `q_{m1}(xi_1) + q_{m2}(xi_2) - q_{m3}(xi_1 + xi_2)` with
/// `q_m(x) = m p(x / m)`. Modulations of a field on surface `m` are measured from
/// `tau = q_m(xi)`; `m = 2` is the surface traced by two equal waves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    params: EquationParams,
    m: [f64; 3],
}

impl Phase {
    pub fn resonance(params: &EquationParams) -> Self {
        Self { params: *params, m: [1.0; 3] }
    }

    pub fn new(params: &EquationParams, m: [u32; 3]) -> Self {
        Self { params: *params, m: m.map(|v| v as f64) }
    }

    #[inline]
    fn q(&self, j: usize, x: f64) -> f64 {
        let m = self.m[j];
        m * self.params.p(x / m)
    }

    #[inline]
    fn q2(&self, j: usize, x: f64) -> f64 {
        let m = self.m[j];
        p2(&self.params, x / m) / m
    }

    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.q(0, a) + self.q(1, b) - self.q(2, a + b)
    }

    fn hessian_bound(&self, pts: &[(f64, f64)]) -> f64 {
        pts.iter()
            .map(|&(a, b)| {
                let c = self.q2(2, a + b);
                let h11 = self.q2(0, a) - c;
                let h22 = self.q2(1, b) - c;
                h11.abs().max(h22.abs()) + c.abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Refine while the interpolation error exceeds `tol * max(h range, min_width)`.
    pub tol: f64,
    pub min_width: f64,
    pub max_depth: u32,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { tol: 0.02, min_width: 1.0, max_depth: 10 }
    }
}

/// Adaptive linear pieces of `h` on a frequency triangle. Sub-triangles whose
/// `h` range provably misses `relevant` are dropped.
pub fn resonance_leaves(
    tri: &XiTriangle,
    params: &EquationParams,
    opts: &RefineOptions,
    relevant: &dyn Fn(f64, f64) -> bool,
) -> Vec<Leaf> {
    phase_leaves(tri, &Phase::resonance(params), opts, relevant)
}

/// As `resonance_leaves` for a generalized phase.
pub fn phase_leaves(tri: &XiTriangle, phase: &Phase, opts: &RefineOptions, relevant: &dyn Fn(f64, f64) -> bool) -> Vec<Leaf> {
    let mut out = Vec::new();
    let v = tri.verts;
    let hv = [phase.eval(v[0].0, v[0].1), phase.eval(v[1].0, v[1].1), phase.eval(v[2].0, v[2].1)];
    refine(v, hv, phase, opts, relevant, 0, &mut out);
    out
}

fn mid(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1))
}

fn refine(
    v: [(f64, f64); 3],
    hv: [f64; 3],
    phase: &Phase,
    opts: &RefineOptions,
    relevant: &dyn Fn(f64, f64) -> bool,
    depth: u32,
    out: &mut Vec<Leaf>,
) {
    let area = 0.5 * ((v[1].0 - v[0].0) * (v[2].1 - v[0].1) - (v[2].0 - v[0].0) * (v[1].1 - v[0].1)).abs();
    if area == 0.0 {
        return;
    }
    let d2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let diam2 = d2(v[0], v[1]).max(d2(v[1], v[2])).max(d2(v[0], v[2]));
    let (m01, m12, m02) = (mid(v[0], v[1]), mid(v[1], v[2]), mid(v[0], v[2]));
    let centroid = ((v[0].0 + v[1].0 + v[2].0) / 3.0, (v[0].1 + v[1].1 + v[2].1) / 3.0);
    let err = 0.5 * phase.hessian_bound(&[v[0], v[1], v[2], m01, m12, m02, centroid]) * diam2;
    let lo = hv.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = hv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !relevant(lo - err, hi + err) {
        return;
    }
    if err > opts.tol * (hi - lo).max(opts.min_width) && depth < opts.max_depth {
        let hm = [phase.eval(m01.0, m01.1), phase.eval(m12.0, m12.1), phase.eval(m02.0, m02.1)];
        refine([v[0], m01, m02], [hv[0], hm[0], hm[2]], phase, opts, relevant, depth + 1, out);
        refine([m01, v[1], m12], [hm[0], hv[1], hm[1]], phase, opts, relevant, depth + 1, out);
        refine([m02, m12, v[2]], [hm[2], hm[1], hv[2]], phase, opts, relevant, depth + 1, out);
        refine([m01, m12, m02], [hm[0], hm[1], hm[2]], phase, opts, relevant, depth + 1, out);
        return;
    }
    let mut h = hv;
    h.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.push(Leaf { area, h });
}

/// Interaction measure of the cell triple `(k1, J1), (k2, J2), (k3, J3)`.
#[allow(clippy::too_many_arguments)]
pub fn cell_kernel(
    k1: i64,
    k2: i64,
    k3: i64,
    dxi: f64,
    j: [&Interval; 3],
    params: &EquationParams,
    window: Option<&HWindow>,
    opts: &RefineOptions,
) -> f64 {
    let Some(tri) = xi_triangles(k1, k2, dxi).into_iter().find(|t| t.k3 == k3) else { return 0.0 };
    let (slo, shi) = slice_support(j[0], j[1], j[2]);
    let relevant = |lo: f64, hi: f64| hi > slo && lo < shi && window.map_or(true, |w| w.meets(lo, hi));
    let opts = RefineOptions { min_width: opts.min_width.min(j[0].width()).min(j[1].width()).min(j[2].width()), ..*opts };
    resonance_leaves(&tri, params, &opts, &relevant).iter().map(|l| leaf_mass(l, j[0], j[1], j[2], window)).sum()
}
