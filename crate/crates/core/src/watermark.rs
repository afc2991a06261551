//! Embedding, extraction and leak-suspect identification.
//!
//! A user's copy of the table receives fake-tuple group `j` exactly when bit
//! `j` of the user's watermark is '1'. Extraction reads bit `j` as '1' when
//! at least one tuple of group `j` is still present.

use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{watermark_length, Codebook, WatermarkSequence};
use crate::error::{Error, Result};
use crate::fakegen::FakeTupleSet;
use crate::rng::rng_from;
use crate::store::{canonical_key_unchecked, Table, Tuple};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub n_u: usize,
    #[serde(rename = "L")]
    pub watermark_length: usize,
    #[serde(rename = "x")]
    pub per_group: usize,
    pub seed: u64,
}

impl SchemeParams {
    pub fn new(n_u: usize, per_group: usize, seed: u64) -> Result<Self> {
        let params = SchemeParams {
            n_u,
            watermark_length: watermark_length(n_u)?,
            per_group,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = watermark_length(self.n_u).map_err(|e| Error::validation(e.to_string()))?;
        if self.watermark_length != expected {
            return Err(Error::validation(format!(
                "L = {} but ceil(log2({})) = {expected}",
                self.watermark_length, self.n_u
            )));
        }
        if self.per_group == 0 {
            return Err(Error::validation("x must be at least 1"));
        }
        Ok(())
    }

    /// Seed for the copy handed to the user at codebook position `index`.
    pub fn user_seed(&self, index: usize) -> u64 {
        self.seed ^ index as u64
    }
}

fn check_compatible(table: &Table, w: &WatermarkSequence, tf: &FakeTupleSet) -> Result<()> {
    if w.len() != tf.group_count() {
        return Err(Error::domain(format!(
            "watermark has {} bits but there are {} fake tuple groups",
            w.len(),
            tf.group_count()
        )));
    }
    if table.schema() != tf.schema() {
        return Err(Error::domain("fake tuples and table have different schemas"));
    }
    Ok(())
}

/// Inserts every tuple of group `j` for each '1' bit `j` of `w`.
///
/// The inserted rows land at positions drawn from `seed`; original rows keep
/// their relative order. An all-zero watermark returns the table unchanged.
pub fn embed(table: &Table, w: &WatermarkSequence, tf: &FakeTupleSet, seed: u64) -> Result<Table> {
    check_compatible(table, w, tf)?;
    let mut fakes: Vec<Tuple> = w
        .ones()
        .flat_map(|j| tf.groups()[j].iter().cloned())
        .collect();
    if fakes.is_empty() {
        return Ok(table.clone());
    }
    let mut rng = rng_from(seed);
    fakes.shuffle(&mut rng);
    let total = table.len() + fakes.len();
    let mut slots = index::sample(&mut rng, total, fakes.len()).into_vec();
    slots.sort_unstable();

    let mut rows = Vec::with_capacity(total);
    let mut originals = table.rows().iter();
    let mut fakes = fakes.into_iter();
    let mut slots = slots.into_iter().peekable();
    for pos in 0..total {
        if slots.next_if_eq(&pos).is_some() {
            rows.push(fakes.next().expect("one fake per slot"));
        } else {
            rows.push(originals.next().expect("remaining slots hold originals").clone());
        }
    }
    Ok(Table::from_conforming(table.schema().clone(), rows))
}

/// One watermarked copy per codebook user, in codebook order. User `i`'s
/// copy is embedded with `seed ^ i`.
pub fn embed_all(
    table: &Table,
    codebook: &Codebook,
    tf: &FakeTupleSet,
    seed: u64,
) -> Result<Vec<(String, Table)>> {
    codebook
        .entries()
        .par_iter()
        .enumerate()
        .map(|(i, e)| Ok((e.user.clone(), embed(table, &e.watermark, tf, seed ^ i as u64)?)))
        .collect()
}

/// Bit `j` is '1' iff at least one tuple of group `j` is present.
pub fn extract(table: &Table, tf: &FakeTupleSet) -> Result<WatermarkSequence> {
    table.schema().check_subset(tf.match_subset())?;
    if table.schema().arity() != tf.schema().arity() {
        return Err(Error::domain("table arity differs from the fake tuples' schema"));
    }
    let groups_of: HashMap<_, usize> = (0..tf.group_count())
        .flat_map(|j| tf.keys(j).map(move |k| (k, j)))
        .collect();
    let mut bits = vec![false; tf.group_count()];
    let mut found = 0;
    for row in table.rows() {
        if let Some(&j) = groups_of.get(&canonical_key_unchecked(row, tf.match_subset())) {
            if !std::mem::replace(&mut bits[j], true) {
                found += 1;
                if found == bits.len() {
                    break;
                }
            }
        }
    }
    WatermarkSequence::new(bits)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suspect {
    pub user: String,
    pub hamming_distance: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub extracted: WatermarkSequence,
    pub exact_match: Option<String>,
    pub suspects: Vec<Suspect>,
}

/// Every codebook user, ranked: users whose watermark covers all '1' bits
/// of `extracted` come first, then the rest; within each part by Hamming
/// distance, ties in codebook order.
pub fn suspect_ranking(extracted: &WatermarkSequence, codebook: &Codebook) -> Result<Vec<Suspect>> {
    if extracted.len() != codebook.watermark_length() {
        return Err(Error::domain(format!(
            "extracted watermark has {} bits, codebook uses {}",
            extracted.len(),
            codebook.watermark_length()
        )));
    }
    let mut ranked: Vec<(bool, usize, usize)> = codebook
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            (
                !e.watermark.covers(extracted),
                e.watermark.hamming(extracted),
                i,
            )
        })
        .collect();
    ranked.sort_unstable();
    Ok(ranked
        .into_iter()
        .map(|(_, d, i)| Suspect {
            user: codebook.entries()[i].user.clone(),
            hamming_distance: d,
        })
        .collect())
}

/// Names the leak source for an extracted watermark.
///
/// Deletion can only turn '1' bits into '0', so when there is no exact
/// match the suspects are restricted to users whose watermark covers the
/// extracted one. If no user does (tampering beyond deletion), all users
/// are ranked by distance.
pub fn identify(extracted: &WatermarkSequence, codebook: &Codebook) -> Result<ExtractionResult> {
    let ranking = suspect_ranking(extracted, codebook)?;
    if let Some(user) = codebook.user_of(extracted) {
        return Ok(ExtractionResult {
            extracted: extracted.clone(),
            exact_match: Some(user.to_owned()),
            suspects: vec![Suspect {
                user: user.to_owned(),
                hamming_distance: 0,
            }],
        });
    }
    let covering = |s: &Suspect| {
        codebook
            .watermark_of(&s.user)
            .is_some_and(|w| w.covers(extracted))
    };
    let suspects = if ranking.iter().any(covering) {
        ranking.into_iter().filter(covering).collect()
    } else {
        let mut all = ranking;
        all.sort_by_key(|s| s.hamming_distance);
        all
    };
    Ok(ExtractionResult {
        extracted: extracted.clone(),
        exact_match: None,
        suspects,
    })
}
