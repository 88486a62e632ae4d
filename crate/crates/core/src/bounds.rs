//! Double-sample deviation bound for the update-vector estimates.
//!
//! With `m` samples the probability that some `z_pq` deviates by more than
//! `ε` (along any separating direction) from its expectation is at most
//!
//! ```text
//! δ̄(m) = 4 Q² (8/ε)^(d+1) exp(−m ε² / 128)
//! ```
//!
//! valid when `m ε² ≥ 32`. Solving `δ̄(m) ≤ δ` gives
//!
//! ```text
//! m ≥ (128/ε²) [ ln(4Q²/δ) + (d+1) ln(8/ε) ].
//! ```
//!
//! The constants come from a loose union/symmetrization argument; treat the
//! numbers as orders of magnitude, not tight sample sizes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    pub m: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub d: usize,
    pub q_classes: usize,
}

fn check(epsilon: f64, delta: f64, d: usize, q: usize) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 8.0) {
        return Err(Error::InvalidQuery("epsilon must lie in (0, 8)"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidQuery("delta must lie in (0, 1]"));
    }
    if d == 0 || q == 0 {
        return Err(Error::InvalidQuery("d and q_classes must be positive"));
    }
    Ok(())
}

fn log_bound(m: u64, epsilon: f64, d: usize, q: usize) -> f64 {
    let q = q as f64;
    libm::log(4.0 * q * q) + (d as f64 + 1.0) * libm::log(8.0 / epsilon)
        - m as f64 * epsilon * epsilon / 128.0
}

/// `min(1, 4Q²(8/ε)^(d+1) e^(−mε²/128))`, evaluated in log space.
pub fn deviation_bound(query: &BoundQuery) -> Result<f64> {
    check(query.epsilon, query.delta, query.d, query.q_classes)?;
    let lb = log_bound(query.m, query.epsilon, query.d, query.q_classes);
    Ok(if lb >= 0.0 { 1.0 } else { libm::exp(lb) })
}

/// Smallest `m` with `deviation_bound(m) ≤ δ` (and `m ε² ≥ 32`).
pub fn min_sample_size(epsilon: f64, delta: f64, d: usize, q_classes: usize) -> Result<u64> {
    check(epsilon, delta, d, q_classes)?;
    if delta >= 1.0 {
        return Err(Error::InvalidQuery("delta must lie in (0, 1)"));
    }
    let eps2 = epsilon * epsilon;
    let q = q_classes as f64;
    let closed = (128.0 / eps2)
        * (libm::log(4.0 * q * q / delta) + (d as f64 + 1.0) * libm::log(8.0 / epsilon));
    let floor = libm::ceil(32.0 / eps2) as u64;
    let mut m = u64::max(libm::ceil(closed) as u64, floor);

    let bound = |m: u64| {
        deviation_bound(&BoundQuery { m, epsilon, delta, d, q_classes }).unwrap_or(1.0)
    };
    while bound(m) > delta {
        m += 1;
    }
    while m > floor && bound(m - 1) <= delta {
        m -= 1;
    }
    Ok(m)
}
