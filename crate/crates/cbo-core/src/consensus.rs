//! Gibbs-weighted consensus point and the Laplace functional.
//!
//! For objective values `f_i` and sharpness `alpha`, the weight of particle
//! i is `exp(-alpha f_i)` normalized over the ensemble, and the consensus
//! point is the weighted mean of positions. All exponentials are shifted by
//! `f_min` before exponentiation, so the computation never under- or
//! overflows as a whole: the best particle always contributes exactly 1.0
//! to the partition sum. With `alpha = 1e15` the shifted exponentials are
//! exactly 1 or 0 in double precision, which realizes argmin selection
//! (ties at `f_min` share weight) without any special-casing.
//!
//! Reductions accumulate sequentially within fixed chunks of 4096 entries
//! and combine chunk results in ascending index order. Workers may compute
//! different chunks, but the combination order is pinned, so results are
//! bit-identical regardless of parallelism.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math;

/// Fixed reduction granularity; see module docs.
pub const REDUCTION_CHUNK: usize = 4096;

/// Normalized Gibbs weights of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    /// `exp(-alpha (f_i - f_min)) / sum_j exp(-alpha (f_j - f_min))`.
    pub normalized_weights: Vec<f64>,
    /// `ln sum_j exp(-alpha (f_j - f_min))`; in [0, ln N].
    pub log_partition_shifted: f64,
    /// Minimum of the (finite) objective values.
    pub f_min: f64,
}

fn validate(f_values: &[f64], alpha: f64) -> Result<(), Error> {
    if f_values.is_empty() {
        return Err(Error::Input(
            "weights require at least one objective value".to_string(),
        ));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::Input(
            "alpha must be a finite positive number".to_string(),
        ));
    }
    if f_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(
            "objective values must all be finite".to_string(),
        ));
    }
    Ok(())
}

/// Sums `term(i)` for `i in 0..n` in the pinned chunked order.
fn chunked_sum(n: usize, mut term: impl FnMut(usize) -> f64) -> f64 {
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = usize::min(start + REDUCTION_CHUNK, n);
        let mut partial = 0.0;
        for i in start..end {
            partial += term(i);
        }
        total += partial;
        start = end;
    }
    total
}

/// Writes the normalized weights into `out`; returns (f_min, log partition).
///
/// This is the allocation-free core of [`weights`], reused by the
/// integrator once per step.
pub fn weights_into(f_values: &[f64], alpha: f64, out: &mut [f64]) -> Result<(f64, f64), Error> {
    validate(f_values, alpha)?;
    assert_eq!(out.len(), f_values.len(), "weight buffer length mismatch");
    let mut f_min = f64::INFINITY;
    for &v in f_values {
        if v < f_min {
            f_min = v;
        }
    }
    for (o, &v) in out.iter_mut().zip(f_values) {
        *o = math::exp(-alpha * (v - f_min));
    }
    let sum = chunked_sum(out.len(), |i| out[i]);
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok((f_min, math::ln(sum)))
}

/// Normalized Gibbs weights `exp(-alpha(f_i - f_min)) / Z` of the ensemble.
pub fn weights(f_values: &[f64], alpha: f64) -> Result<WeightVector, Error> {
    let mut w = alloc::vec![0.0; f_values.len()];
    let (f_min, log_partition_shifted) = weights_into(f_values, alpha, &mut w)?;
    Ok(WeightVector {
        normalized_weights: w,
        log_partition_shifted,
        f_min,
    })
}

/// Weighted mean of row-major `positions` (N x d) under `weights`,
/// accumulated per coordinate in the pinned chunked order.
pub fn weighted_mean_into(positions: &[f64], d: usize, weights: &[f64], out: &mut [f64]) {
    let n = weights.len();
    assert_eq!(positions.len(), n * d, "positions length must be N*d");
    assert_eq!(out.len(), d, "output length must be d");
    out.fill(0.0);
    let mut start = 0;
    let mut partial = alloc::vec![0.0; d];
    while start < n {
        let end = usize::min(start + REDUCTION_CHUNK, n);
        partial.fill(0.0);
        for i in start..end {
            let w = weights[i];
            let row = &positions[i * d..(i + 1) * d];
            for k in 0..d {
                partial[k] += w * row[k];
            }
        }
        for k in 0..d {
            out[k] += partial[k];
        }
        start = end;
    }
}

/// The consensus point `m_alpha`: Gibbs-weighted mean of the ensemble.
///
/// `positions` is row-major N x d with N = `f_values.len()`.
pub fn consensus_point(
    positions: &[f64],
    d: usize,
    f_values: &[f64],
    alpha: f64,
) -> Result<Vec<f64>, Error> {
    if d == 0 || positions.len() != f_values.len() * d {
        return Err(Error::Input(
            "positions length must equal N*d with d >= 1".to_string(),
        ));
    }
    let w = weights(f_values, alpha)?;
    let mut out = alloc::vec![0.0; d];
    weighted_mean_into(positions, d, &w.normalized_weights, &mut out);
    Ok(out)
}

/// The Laplace functional `f_min - ln((1/N) sum_i exp(-alpha(f_i - f_min))) / alpha`.
///
/// Non-increasing in `alpha`; converges to `min f` as `alpha` grows and to
/// values below `mean f` always.
pub fn laplace_functional(f_values: &[f64], alpha: f64) -> Result<f64, Error> {
    validate(f_values, alpha)?;
    let mut f_min = f64::INFINITY;
    for &v in f_values {
        if v < f_min {
            f_min = v;
        }
    }
    let sum = chunked_sum(f_values.len(), |i| {
        math::exp(-alpha * (f_values[i] - f_min))
    });
    Ok(f_min - math::ln(sum / f_values.len() as f64) / alpha)
}
