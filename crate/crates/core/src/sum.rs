//! Fixed-order pairwise summation.
//!
//! Every quadrature in the crate goes through these helpers so that reductions
//! are reproducible bit for bit regardless of how the caller is scheduled.

const BLOCK: usize = 32;

pub(crate) fn pairwise(xs: &[f64]) -> f64 {
    if xs.len() <= BLOCK {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise(&xs[..mid]) + pairwise(&xs[mid..])
    }
}

/// Pairwise sum of `f(i)` for `i in 0..n` without materialising a buffer for small `n`.
pub(crate) fn pairwise_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= BLOCK {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}
