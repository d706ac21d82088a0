//! Fixed-order reductions, so that results do not depend on thread count.

use rayon::prelude::*;

const BLOCK: usize = 1024;

/// Pairwise (cascade) summation with a fixed tree shape.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 32 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// Deterministic parallel sum: fixed blocks summed in parallel, then a
/// pairwise reduction over the block partials.
pub fn par_sum(x: &[f64]) -> f64 {
    let partials: Vec<f64> = x.par_chunks(BLOCK).map(pairwise_sum).collect();
    pairwise_sum(&partials)
}

/// Deterministic parallel dot product.
pub fn par_dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let partials: Vec<f64> = x
        .par_chunks(BLOCK)
        .zip(y.par_chunks(BLOCK))
        .map(|(a, b)| {
            let prod: Vec<f64> = a.iter().zip(b).map(|(p, q)| p * q).collect();
            pairwise_sum(&prod)
        })
        .collect();
    pairwise_sum(&partials)
}
