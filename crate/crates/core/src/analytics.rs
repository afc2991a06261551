//! Closed-form robustness and transparency predictions.
//!
//! Everything here is generic over the float type so the same formulas can
//! be evaluated in `f32` or `f64`; see the aliases at the crate root.
//!
//! Symbols: `n` tuples in the attacked copy, deletion ratio `p`, `x` fake
//! tuples per group, watermark length `L`, `n_u` users, `k` '1' bits.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};
use serde::Serialize;

use crate::attacks::deletion_count;
use crate::codebook::{watermark_length, Codebook, MAX_WATERMARK_LENGTH};
use crate::error::{Error, Result};

/// Scalar for probability arithmetic.
pub trait Real: Float + FromPrimitive + Debug + Send + Sync + 'static {}

impl<T: Float + FromPrimitive + Debug + Send + Sync + 'static> Real for T {}

/// Products longer than this are accumulated as sums of logarithms.
const LOG_SPACE_THRESHOLD: usize = 50;

fn real<F: Real>(v: usize) -> F {
    F::from_usize(v).expect("usize converts to float")
}

fn check_probability<F: Real>(name: &str, v: F) -> Result<()> {
    if v >= F::zero() && v <= F::one() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {v:?} outside [0, 1]")))
    }
}

/// Probability that all `x` tuples of one group are among `d` tuples
/// deleted uniformly from `n`: `prod_{i<x} (d - i) / (n - i)`.
pub fn p_cd_from_deletions<F: Real>(n: usize, d: usize, x: usize) -> Result<F> {
    if x == 0 || x > n {
        return Err(Error::domain(format!("need 1 <= x <= n, got x={x} n={n}")));
    }
    if d > n {
        return Err(Error::domain(format!("cannot delete {d} of {n} tuples")));
    }
    if d < x {
        return Ok(F::zero());
    }
    let ratio = |i: usize| real::<F>(d - i) / real::<F>(n - i);
    if x > LOG_SPACE_THRESHOLD {
        Ok((0..x).map(|i| ratio(i).ln()).fold(F::zero(), |a, b| a + b).exp())
    } else {
        Ok((0..x).map(ratio).fold(F::one(), |a, b| a * b))
    }
}

/// Exact complete-deletion probability with `d = round(p * n)`.
pub fn p_cd_exact<F: Real>(n: usize, p: F, x: usize) -> Result<F> {
    check_probability("p", p)?;
    let d = deletion_count(n, p.to_f64().expect("float converts to f64"));
    p_cd_from_deletions(n, d, x)
}

/// Upper approximation `p^x`.
pub fn p_cd_approx<F: Real>(p: F, x: usize) -> F {
    p.powi(x as i32)
}

/// Probability of reading a bit correctly: `1 - P_cd` for '1', always 1 for
/// '0' (deletion never creates a fake tuple).
pub fn p_bit<F: Real>(one_bit: bool, p_cd: F) -> F {
    if one_bit {
        F::one() - p_cd
    } else {
        F::one()
    }
}

/// Probability of extracting a watermark with `k` '1' bits exactly.
pub fn p_ka<F: Real>(p_cd: F, k: usize, len: usize) -> Result<F> {
    if k > len {
        return Err(Error::domain(format!("k = {k} exceeds L = {len}")));
    }
    Ok(p_bit(true, p_cd).powi(k as i32) * p_bit(false, p_cd).powi((len - k) as i32))
}

fn binomial<F: Real>(len: usize, k: usize) -> F {
    let k = k.min(len - k);
    (0..k).fold(F::one(), |acc, i| acc * real::<F>(len - i) / real::<F>(i + 1))
}

/// Share of `L`-bit sequences with exactly `k` '1' bits: `C(L, k) / 2^L`.
pub fn p_ko<F: Real>(len: usize, k: usize) -> Result<F> {
    if k > len {
        return Err(Error::domain(format!("k = {k} exceeds L = {len}")));
    }
    Ok(binomial::<F>(len, k) / real::<F>(2).powi(len as i32))
}

/// Expected exact-extraction probability with all `2^L` sequences equally
/// likely, in closed form `(1 - P_cd / 2)^L`.
pub fn ep_uniform<F: Real>(p_cd: F, len: usize) -> F {
    let half = F::from_f64(0.5).expect("0.5 is representable");
    (F::one() - half * p_cd).powi(len as i32)
}

/// The same expectation as [`ep_uniform`], summed term by term over `k`.
pub fn ep_uniform_summed<F: Real>(p_cd: F, len: usize) -> F {
    (0..=len)
        .map(|k| p_ka(p_cd, k, len).expect("k <= L") * p_ko(len, k).expect("k <= L"))
        .fold(F::zero(), |a, b| a + b)
}

/// Per-bit success for the combination baseline: a wiped group's bit is a
/// fair coin, so every bit is right with probability `1 - P_cd / 2`.
pub fn baseline_bit_correct<F: Real>(p_cd: F) -> F {
    let half = F::from_f64(0.5).expect("0.5 is representable");
    F::one() - half * p_cd
}

/// Exact-extraction probability of the baseline. Independent of the
/// watermark's bit pattern.
pub fn ep_baseline<F: Real>(p_cd: F, len: usize) -> F {
    (0..len).fold(F::one(), |acc, _| acc * baseline_bit_correct(p_cd))
}

/// Exact-extraction probability averaged over the `n_u` sparsest codes,
/// each user equally likely to leak.
pub fn ep_sparse<F: Real>(n_u: usize, len: usize, p_cd: F) -> Result<F> {
    if len == 0 || len > MAX_WATERMARK_LENGTH {
        return Err(Error::domain(format!("unsupported watermark length {len}")));
    }
    if n_u == 0 || n_u as u128 > 1u128 << len {
        return Err(Error::Capacity(format!(
            "{n_u} users do not fit in 2^{len} watermarks"
        )));
    }
    let survive = F::one() - p_cd;
    let mut remaining = n_u as u128;
    let mut total = F::zero();
    let mut class_size: u128 = 1; // C(L, k), updated incrementally
    for k in 0..=len {
        let take = class_size.min(remaining);
        total = total + F::from_u128(take).expect("count converts") * survive.powi(k as i32);
        remaining -= take;
        if remaining == 0 {
            break;
        }
        class_size = class_size * (len - k) as u128 / (k + 1) as u128;
    }
    Ok(total / real(n_u))
}

/// Upper bound on inserted fake tuples per copy: `x * ceil(log2 n_u) / 2`.
pub fn ni_bound<F: Real>(x: usize, n_u: usize) -> Result<F> {
    Ok(real::<F>(x * watermark_length(n_u)?) / real(2))
}

/// Mean number of fake tuples inserted per copy for this codebook.
pub fn ni_expected<F: Real>(codebook: &Codebook, x: usize) -> F {
    let ones: usize = codebook.entries().iter().map(|e| e.watermark.popcount()).sum();
    real::<F>(x * ones) / real(codebook.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryPoint<F> {
    pub n: usize,
    pub p: F,
    pub x: usize,
    #[serde(rename = "L")]
    pub watermark_length: usize,
    pub n_u: usize,
    pub p_cd_exact: F,
    pub p_cd_approx: F,
    pub p1: F,
    pub ep: F,
    pub ep_baseline: F,
    pub ep_sparse: F,
    pub ni_bound: F,
}

impl<F: Real> TheoryPoint<F> {
    pub fn evaluate(n: usize, p: F, x: usize, len: usize, n_u: usize) -> Result<Self> {
        let p_cd = p_cd_exact(n, p, x)?;
        Ok(TheoryPoint {
            n,
            p,
            x,
            watermark_length: len,
            n_u,
            p_cd_exact: p_cd,
            p_cd_approx: p_cd_approx(p, x),
            p1: p_bit(true, p_cd),
            ep: ep_uniform(p_cd, len),
            ep_baseline: ep_baseline(p_cd, len),
            ep_sparse: ep_sparse(n_u, len, p_cd)?,
            ni_bound: real::<F>(x * len) / real(2),
        })
    }
}

/// A sweep over `p_values` at fixed `(n, x, L, n_u)`.
pub fn theory_table<F: Real>(
    n: usize,
    x: usize,
    len: usize,
    n_u: usize,
    p_values: &[F],
) -> Result<Vec<TheoryPoint<F>>> {
    p_values
        .iter()
        .map(|&p| TheoryPoint::evaluate(n, p, x, len, n_u))
        .collect()
}
