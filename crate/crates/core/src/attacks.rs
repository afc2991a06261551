//! Random tuple-deletion attacks and a brute-force oracle for the chance
//! that a marked group of tuples is wiped out.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::store::Table;

/// Largest `n` the exhaustive oracle will enumerate.
pub const EXHAUSTIVE_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub p: f64,
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("deletion ratio {p} outside [0, 1]")));
        }
        Ok(AttackSpec { p, seed })
    }
}

/// `round(p * n)`, halves rounded away from zero.
pub fn deletion_count(n: usize, p: f64) -> usize {
    ((p * n as f64).round() as usize).min(n)
}

/// Removes exactly `deletion_count(n, p)` rows chosen uniformly without
/// replacement. Survivors keep their relative order.
pub fn delete_random(table: &Table, spec: &AttackSpec) -> Table {
    let n = table.len();
    let d = deletion_count(n, spec.p);
    if d == 0 {
        return table.clone();
    }
    let mut rng = rng_from(spec.seed);
    let mut doomed = vec![false; n];
    for i in index::sample(&mut rng, n, d) {
        doomed[i] = true;
    }
    table.retain_rows(|i, _| !doomed[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Enumerate every `d`-subset; only for `n <= EXHAUSTIVE_LIMIT`.
    Exhaustive,
    MonteCarlo { trials: usize, seed: u64 },
}

/// Probability that a fixed set of `x` marked tuples among `n` is entirely
/// contained in a uniformly random set of `d` deleted tuples, estimated
/// without any closed form.
pub fn survival_probability_oracle(n: usize, x: usize, d: usize, mode: OracleMode) -> Result<f64> {
    if x > n || d > n {
        return Err(Error::domain(format!(
            "need x <= n and d <= n, got n={n} x={x} d={d}"
        )));
    }
    match mode {
        OracleMode::Exhaustive => {
            let (hits, total) = enumerate_deletions(n, x, d)?;
            Ok(hits as f64 / total as f64)
        }
        OracleMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::domain("need at least one trial"));
            }
            let hits = (0..trials)
                .into_par_iter()
                .filter(|&t| {
                    let mut rng = rng_from(derive_seed(seed, &[t as u64]));
                    index::sample(&mut rng, n, d)
                        .into_iter()
                        .filter(|&i| i < x)
                        .count()
                        == x
                })
                .count();
            Ok(hits as f64 / trials as f64)
        }
    }
}

/// Counts `(deletion sets covering the marked tuples, all deletion sets)`
/// over every `d`-subset of `n` tuples. Tuples `0..x` are the marked ones.
pub fn enumerate_deletions(n: usize, x: usize, d: usize) -> Result<(u64, u64)> {
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::domain(format!(
            "exhaustive enumeration limited to n <= {EXHAUSTIVE_LIMIT}, got {n}"
        )));
    }
    if x > n || d > n {
        return Err(Error::domain("need x <= n and d <= n"));
    }
    let marked: u32 = (1u32 << x) - 1;
    let limit: u32 = 1u32 << n;
    let (mut hits, mut total) = (0u64, 0u64);
    let mut mask: u32 = (1u32 << d) - 1;
    loop {
        total += 1;
        if mask & marked == marked {
            hits += 1;
        }
        if mask == 0 {
            break;
        }
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
        if mask >= limit {
            break;
        }
    }
    Ok((hits, total))
}
