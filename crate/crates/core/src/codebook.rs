//! Watermark sequences and the sparse-priority user codebook.
//!
//! Bit 0 is the leftmost character of the written form, so `"10"` has bit 0
//! set, and bit `j` selects fake-tuple group `j`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Longest watermark the codebook can enumerate (sequences are packed in a `u64`).
pub const MAX_WATERMARK_LENGTH: usize = 63;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WatermarkSequence {
    bits: Vec<bool>,
}

impl WatermarkSequence {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::domain("watermark length must be at least 1"));
        }
        Ok(WatermarkSequence { bits })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![false; len])
    }

    /// Unpacks the low `len` bits of `value`, most significant first, so that
    /// the written string reads as the binary numeral of `value`.
    pub fn from_value(value: u64, len: usize) -> Result<Self> {
        if len == 0 || len > MAX_WATERMARK_LENGTH {
            return Err(Error::domain(format!("unsupported watermark length {len}")));
        }
        if value >> len != 0 {
            return Err(Error::domain(format!("{value} does not fit in {len} bits")));
        }
        Ok(WatermarkSequence {
            bits: (0..len).map(|i| value >> (len - 1 - i) & 1 == 1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Indices of the '1' bits.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j)
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// True when every '1' of `other` is also a '1' here.
    pub fn covers(&self, other: &Self) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }
}

pub fn popcount(w: &WatermarkSequence) -> usize {
    w.popcount()
}

impl fmt::Display for WatermarkSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for WatermarkSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W({self})")
    }
}

impl FromStr for WatermarkSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::domain(format!(
                    "watermark {s:?} contains non-binary character {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        WatermarkSequence::new(bits)
    }
}

impl Serialize for WatermarkSequence {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WatermarkSequence {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `ceil(log2(n_u))`. A single user needs no tracing, so `n_u < 2` is rejected.
pub fn watermark_length(n_u: usize) -> Result<usize> {
    if n_u < 2 {
        return Err(Error::domain(format!(
            "need at least 2 users to derive a watermark length, got {n_u}"
        )));
    }
    Ok((usize::BITS - (n_u - 1).leading_zeros()) as usize)
}

/// Lazily yields all `len`-bit sequences, fewest '1' bits first, ties in
/// ascending numeric order.
#[derive(Debug, Clone)]
pub struct SparseOrder {
    len: usize,
    ones: usize,
    next: Option<u64>,
}

impl SparseOrder {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || len > MAX_WATERMARK_LENGTH {
            return Err(Error::domain(format!("unsupported watermark length {len}")));
        }
        Ok(SparseOrder {
            len,
            ones: 0,
            next: Some(0),
        })
    }
}

impl Iterator for SparseOrder {
    type Item = WatermarkSequence;

    fn next(&mut self) -> Option<Self::Item> {
        let value = self.next?;
        let limit = 1u64 << self.len;
        // Next larger integer with the same popcount (Gosper's hack).
        let successor = if value == 0 {
            None
        } else {
            let c = value & value.wrapping_neg();
            let r = value + c;
            Some((((r ^ value) >> 2) / c) | r)
        };
        self.next = match successor {
            Some(s) if s < limit => Some(s),
            _ if self.ones < self.len => {
                self.ones += 1;
                Some((1u64 << self.ones) - 1)
            }
            _ => None,
        };
        Some(WatermarkSequence::from_value(value, self.len).expect("value below 2^len"))
    }
}

/// All `2^len` sequences in sparse-priority order.
pub fn sparse_order(len: usize) -> Result<Vec<WatermarkSequence>> {
    if len > 24 {
        return Err(Error::Capacity(format!(
            "refusing to materialize 2^{len} sequences; iterate SparseOrder instead"
        )));
    }
    Ok(SparseOrder::new(len)?.collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookEntry {
    pub user: String,
    pub watermark: WatermarkSequence,
}

/// The user to watermark mapping, sparsest watermark first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Codebook {
    entries: Vec<CodebookEntry>,
}

impl Codebook {
    /// Validates a persisted codebook: one length, unique users and
    /// watermarks, entries in sparse-priority order.
    pub fn from_entries(entries: Vec<CodebookEntry>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::validation("codebook is empty"))?;
        let len = first.watermark.len();
        let mut users = HashSet::new();
        let mut marks = HashSet::new();
        for e in &entries {
            if e.watermark.len() != len {
                return Err(Error::validation("codebook watermarks differ in length"));
            }
            if !users.insert(e.user.as_str()) {
                return Err(Error::validation(format!("duplicate user {:?}", e.user)));
            }
            if !marks.insert(&e.watermark) {
                return Err(Error::validation(format!(
                    "watermark {} assigned twice",
                    e.watermark
                )));
            }
        }
        let sparse_key = |w: &WatermarkSequence| (w.popcount(), w.clone());
        if entries
            .windows(2)
            .any(|p| sparse_key(&p[0].watermark) > sparse_key(&p[1].watermark))
        {
            return Err(Error::validation("codebook is not in sparse-priority order"));
        }
        Ok(Codebook { entries })
    }

    pub fn entries(&self) -> &[CodebookEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn watermark_length(&self) -> usize {
        self.entries[0].watermark.len()
    }

    pub fn position(&self, user: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.user == user)
    }

    pub fn watermark_of(&self, user: &str) -> Option<&WatermarkSequence> {
        self.entries
            .iter()
            .find(|e| e.user == user)
            .map(|e| &e.watermark)
    }

    pub fn user_of(&self, w: &WatermarkSequence) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| &e.watermark == w)
            .map(|e| e.user.as_str())
    }

    pub fn mean_popcount(&self) -> f64 {
        let total: usize = self.entries.iter().map(|e| e.watermark.popcount()).sum();
        total as f64 / self.entries.len() as f64
    }
}

impl<'de> Deserialize<'de> for Codebook {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let entries = Vec::<CodebookEntry>::deserialize(de)?;
        Codebook::from_entries(entries).map_err(serde::de::Error::custom)
    }
}

/// Pairs `user_ids[i]` with the `i`-th sparsest `len`-bit sequence.
pub fn assign<S: AsRef<str>>(user_ids: &[S], len: usize) -> Result<Codebook> {
    if user_ids.is_empty() {
        return Err(Error::domain("no users to assign"));
    }
    let order = SparseOrder::new(len)?;
    if user_ids.len() as u128 > 1u128 << len {
        return Err(Error::Capacity(format!(
            "{} users exceed the 2^{len} available watermarks",
            user_ids.len()
        )));
    }
    let mut seen = HashSet::new();
    let entries = user_ids
        .iter()
        .zip(order)
        .map(|(user, watermark)| {
            let user = user.as_ref();
            if !seen.insert(user) {
                return Err(Error::domain(format!("duplicate user id {user:?}")));
            }
            Ok(CodebookEntry {
                user: user.to_owned(),
                watermark,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Codebook { entries })
}

/// `u000`, `u001`, ... padded to a common width.
pub fn default_user_ids(n_u: usize) -> Vec<String> {
    let width = n_u.saturating_sub(1).to_string().len().max(3);
    (0..n_u).map(|i| format!("u{i:0width$}")).collect()
}
