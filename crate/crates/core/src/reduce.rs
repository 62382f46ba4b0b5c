//! Deterministic reductions.
//!
//! Every integral and norm in the crate funnels through the fixed pairwise
//! tree below, so results are bit-identical regardless of thread count.

/// Pairwise sum with a fixed recursion tree (split at the midpoint, serial
/// base case of 32 elements in index order).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n` without materializing the terms.
pub fn pairwise_sum_by(n: usize, f: &impl Fn(usize) -> f64) -> f64 {
    fn go(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= 32 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + (hi - lo) / 2;
        go(lo, mid, f) + go(mid, hi, f)
    }
    go(0, n, f)
}

/// Maximum in index order. NaN-free inputs are the caller's contract.
pub fn max_all(xs: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    m
}

pub fn min_all(xs: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for &x in xs {
        if x < m {
            m = x;
        }
    }
    m
}

pub fn max_abs(xs: &[f64]) -> f64 {
    let mut m = 0.0;
    for &x in xs {
        let a = x.abs();
        if a > m {
            m = a;
        }
    }
    m
}
