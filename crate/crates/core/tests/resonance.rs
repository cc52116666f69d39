use kawahara_core::dispersion::*;

// Exhaustive grid over the extreme coordinates of every pattern, both signs.
fn grid_min(params: &EquationParams, n_cap: f64, m: usize) -> f64 {
    let mut best = f64::INFINITY;
    for pat in resonance_patterns(params, n_cap) {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| pat[i].total_cmp(&pat[j]));
        let (lo, mid, hi) = (pat[order[0]], pat[order[1]], pat[order[2]]);
        let norm = hi.powi(4) * lo;
        for i in 0..m {
            for j in 0..m {
                let a0 = lo * (1.0 + (i as f64 + 0.5) / m as f64);
                let c0 = hi * (1.0 + (j as f64 + 0.5) / m as f64);
                for (a, c) in [(a0, c0), (a0, -c0), (-a0, c0), (-a0, -c0)] {
                    let b = -a - c;
                    if b.abs() >= mid && b.abs() < 2.0 * mid {
                        best = best.min(resonance_h(a, c, params).abs() / norm);
                    }
                }
            }
        }
    }
    best
}

#[test]
fn sampled_minimum_agrees_with_grid_and_is_stable() {
    for (a, b) in [(0.0, 1.0), (1.0, 1.0), (1.0, -1.0)] {
        let p = EquationParams::kawahara(a, b).unwrap();
        let r1 = verify_resonance_bound(&p, 1024.0, 1000, 11).unwrap();
        let r2 = verify_resonance_bound(&p, 1024.0, 2000, 11).unwrap();
        let g = grid_min(&p, 1024.0, 48);
        assert!(r1.min_ratio > 0.0 && r2.min_ratio > 0.0);
        assert!((r1.min_ratio / r2.min_ratio - 1.0).abs() < 0.05, "{a} {b}: {} vs {}", r1.min_ratio, r2.min_ratio);
        assert!((r2.min_ratio / g - 1.0).abs() < 0.05, "{a} {b}: sampled {} grid {g}", r2.min_ratio);
    }
}

#[test]
fn pure_fifth_order_infimum() {
    // (2N, -N, -N) gives h = 30 N^5 against N_max^4 N_min = 16 N^5
    let p = EquationParams::kawahara(0.0, 1.0).unwrap();
    let r = verify_resonance_bound(&p, 64.0, 4000, 3).unwrap();
    assert!(r.min_ratio >= 1.875 * (1.0 - 1e-12));
    assert!(r.min_ratio < 1.875 * 1.02);
}
