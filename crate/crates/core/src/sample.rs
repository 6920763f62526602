//! Deterministic quasi-random sampling of chart boxes.
//!
//! Sample plans use a digit-scrambled Halton sequence: low-discrepancy, so a
//! couple dozen points already probe a box far better than a random cloud,
//! and fully reproducible — a `(seed, count)` pair always yields the same
//! points, byte for byte, which the report machinery relies on.
//!
//! Points are pulled toward the interior by a relative margin so that the
//! classifier's finite-difference stencils (which step a few multiples of
//! `1e-3` off each sample) never leave the declared domain.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Primes indexing the Halton dimensions (enough for every supported chart
/// dimension).
const PRIMES: [u64; crate::jet::MAX_VARS] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Fraction of each box edge kept clear on both sides.
pub const INTERIOR_MARGIN: f64 = 0.05;

/// Scrambled radical inverse of `index` in base `b` under the digit
/// permutation `perm` (a permutation of `0..b` with `perm[0] == 0` so that
/// trailing zeros stay zeros).
fn radical_inverse(mut index: u64, b: u64, perm: &[u64]) -> f64 {
    let mut inv = 0.0f64;
    let mut scale = 1.0f64 / b as f64;
    while index > 0 {
        let digit = index % b;
        inv += perm[digit as usize] as f64 * scale;
        scale /= b as f64;
        index /= b;
    }
    inv
}

/// Deterministic scrambled-Halton sample of `count` points inside `bounds`,
/// keeping a relative margin of each edge free on both sides.
pub fn halton_points(
    bounds: &[(f64, f64)],
    count: usize,
    seed: u64,
    margin: f64,
) -> Result<Vec<Vec<f64>>> {
    let dim = bounds.len();
    if dim == 0 || dim > PRIMES.len() {
        return Err(Error::Dimension(format!(
            "sampling supports 1..={} dimensions, got {dim}",
            PRIMES.len()
        )));
    }
    if !(0.0..0.5).contains(&margin) {
        return Err(Error::Parameter(format!(
            "interior margin must be in [0, 0.5), got {margin}"
        )));
    }
    for (v, &(lo, hi)) in bounds.iter().enumerate() {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Parameter(format!(
                "empty or non-finite sample box [{lo}, {hi}] for u{}",
                v + 1
            )));
        }
    }

    // One digit permutation per dimension, all derived from the seed. The
    // zero digit is pinned so that the radical inverse stays in [0, 1).
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<u64>> = PRIMES[..dim]
        .iter()
        .map(|&b| {
            let mut p: Vec<u64> = (1..b).collect();
            p.shuffle(&mut rng);
            let mut full = vec![0u64];
            full.extend(p);
            full
        })
        .collect();

    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        let index = i as u64 + 1; // skip the all-zeros index
        let p: Vec<f64> = (0..dim)
            .map(|v| {
                let u = radical_inverse(index, PRIMES[v], &perms[v]);
                let (lo, hi) = bounds[v];
                let w = hi - lo;
                lo + w * (margin + (1.0 - 2.0 * margin) * u)
            })
            .collect();
        points.push(p);
    }
    Ok(points)
}
