//! Thread-local FFT plan cache.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward transform, `X_k = sum_j x_j e^{-2 pi i jk/n}`.
pub fn forward(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// Unnormalized inverse transform, `x_j = sum_k X_k e^{2 pi i jk/n}`.
pub fn inverse(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
}

/// Signed wavenumber of FFT-ordered index `j` on a length-`n` transform.
#[inline]
pub fn signed_index(j: usize, n: usize) -> i64 {
    if j < n.div_ceil(2) {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Inverse of [`signed_index`]; `None` when `k` lies outside the transform.
#[inline]
pub fn fft_slot(k: i64, n: usize) -> Option<usize> {
    let n_i = n as i64;
    let lo = -(n_i / 2);
    let hi = n_i - 1 - n_i / 2;
    if k < lo || k > hi {
        return None;
    }
    Some(if k >= 0 { k as usize } else { (k + n_i) as usize })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_roundtrip() {
        for n in [1usize, 2, 7, 8, 9, 64] {
            for j in 0..n {
                assert_eq!(fft_slot(signed_index(j, n), n), Some(j));
            }
        }
        assert_eq!(fft_slot(4, 8), None);
        assert_eq!(fft_slot(-4, 8), Some(4));
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let mut v: Vec<Complex64> = (0..12).map(|j| Complex64::new(j as f64, -(j as f64) * 0.5)).collect();
        let orig = v.clone();
        forward(&mut v);
        inverse(&mut v);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a / 12.0 - b).norm() < 1e-12);
        }
    }
}
