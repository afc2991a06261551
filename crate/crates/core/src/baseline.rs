//! The combination-based fake-tuple scheme used as the comparison target.
//!
//! Every tuple is hashed (under a secret key) into one of `L` groups and one
//! of two polarities. Bit `j` is embedded by inserting `x` fake tuples of
//! group `j` directly below anchor rows of group `j`: a '0'-polarity fake
//! under a '1'-polarity anchor forms a "10" combination (bit '1'), a
//! '1'-polarity fake under a '0'-polarity anchor forms a "01" combination
//! (bit '0'). Every copy receives `x * L` fake tuples whatever the
//! watermark.
//!
//! Extraction looks at each surviving recorded fake tuple and the row now
//! directly above it, counts "10" against "01" per group, and flips a keyed
//! coin when a group shows neither.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codebook::{Codebook, WatermarkSequence};
use crate::error::{Error, Result};
use crate::fakegen::FakeGenerator;
use crate::rng::rng_from;
use crate::store::{canonical_key_unchecked, Schema, Table, Tuple};
use crate::watermark::{ExtractionResult, Suspect};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineParams {
    #[serde(rename = "L")]
    pub watermark_length: usize,
    #[serde(rename = "x")]
    pub per_group: usize,
    pub key: String,
    pub match_subset: Vec<usize>,
}

impl BaselineParams {
    pub fn new(watermark_length: usize, per_group: usize, key: impl Into<String>, match_subset: Vec<usize>) -> Result<Self> {
        if watermark_length == 0 || per_group == 0 {
            return Err(Error::domain("baseline needs L >= 1 and x >= 1"));
        }
        if match_subset.is_empty() {
            return Err(Error::domain("match subset is empty"));
        }
        Ok(BaselineParams {
            watermark_length,
            per_group,
            key: key.into(),
            match_subset,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TupleClass {
    pub polarity: Polarity,
    pub group: usize,
}

fn keyed_digest(key: &str, domain: &[u8], message: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((key.len() as u64).to_le_bytes());
    h.update(key.as_bytes());
    h.update(domain);
    h.update(message);
    h.finalize().into()
}

/// Keyed, order-independent group and polarity of a tuple.
pub fn classify(tuple: &Tuple, params: &BaselineParams) -> TupleClass {
    let key = canonical_key_unchecked(tuple, &params.match_subset);
    let digest = keyed_digest(&params.key, b"class", key.as_str().as_bytes());
    let word = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    TupleClass {
        group: (word % params.watermark_length as u64) as usize,
        polarity: if digest[8] & 1 == 1 {
            Polarity::One
        } else {
            Polarity::Zero
        },
    }
}

fn coin(params: &BaselineParams, seed: u64, group: usize) -> bool {
    let mut msg = seed.to_le_bytes().to_vec();
    msg.extend_from_slice(&(group as u64).to_le_bytes());
    keyed_digest(&params.key, b"coin", &msg)[0] & 1 == 1
}

/// Fake tuples pre-sorted by class: for group `j`, `zeros[j]` carry bit '1'
/// and `ones[j]` carry bit '0'. Each list holds exactly `x` tuples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineFakes {
    pub zeros: Vec<Vec<Tuple>>,
    pub ones: Vec<Vec<Tuple>>,
}

impl BaselineFakes {
    /// Draws mimic rows until every (group, polarity) class holds `x` fakes.
    pub fn generate(generator: &FakeGenerator<'_>, params: &BaselineParams, seed: u64) -> Result<Self> {
        if generator.match_subset() != params.match_subset.as_slice() {
            return Err(Error::domain("generator and baseline use different match subsets"));
        }
        let classes = 2 * params.watermark_length;
        let mut filled: HashMap<TupleClass, usize> = HashMap::with_capacity(classes);
        let mut rng = rng_from(seed);
        let rows = generator.draw_unique(classes * params.per_group, &mut rng, |row| {
            let slot = filled.entry(classify(row, params)).or_insert(0);
            if *slot < params.per_group {
                *slot += 1;
                true
            } else {
                false
            }
        })?;
        let mut fakes = BaselineFakes {
            zeros: vec![Vec::new(); params.watermark_length],
            ones: vec![Vec::new(); params.watermark_length],
        };
        for row in rows {
            let class = classify(&row, params);
            match class.polarity {
                Polarity::Zero => fakes.zeros[class.group].push(row),
                Polarity::One => fakes.ones[class.group].push(row),
            }
        }
        Ok(fakes)
    }

    fn validate(&self, params: &BaselineParams) -> Result<()> {
        let len = params.watermark_length;
        if self.zeros.len() != len || self.ones.len() != len {
            return Err(Error::validation(format!("baseline fakes must cover {len} groups")));
        }
        for (j, (z, o)) in self.zeros.iter().zip(&self.ones).enumerate() {
            if z.len() != params.per_group || o.len() != params.per_group {
                return Err(Error::validation(format!(
                    "group {j} needs {} fakes of each polarity",
                    params.per_group
                )));
            }
            let expect = |t: &Tuple, polarity| {
                classify(t, params) == TupleClass { polarity, group: j }
            };
            if !z.iter().all(|t| expect(t, Polarity::Zero)) || !o.iter().all(|t| expect(t, Polarity::One)) {
                return Err(Error::validation(format!(
                    "group {j} holds fakes of the wrong class for this key"
                )));
            }
        }
        Ok(())
    }
}

/// Inserts `x` fakes per group below randomly chosen anchors of that group.
pub fn baseline_embed(
    table: &Table,
    w: &WatermarkSequence,
    params: &BaselineParams,
    fakes: &BaselineFakes,
    seed: u64,
) -> Result<Table> {
    if w.len() != params.watermark_length {
        return Err(Error::domain(format!(
            "watermark has {} bits, baseline uses L = {}",
            w.len(),
            params.watermark_length
        )));
    }
    table.schema().check_subset(&params.match_subset)?;
    fakes.validate(params)?;

    let mut candidates: HashMap<TupleClass, Vec<usize>> = HashMap::new();
    for (i, row) in table.rows().iter().enumerate() {
        candidates.entry(classify(row, params)).or_default().push(i);
    }

    let mut rng = rng_from(seed);
    let mut below: HashMap<usize, &Tuple> = HashMap::with_capacity(params.per_group * w.len());
    for (j, &bit) in w.bits().iter().enumerate() {
        let (anchor, pool) = if bit {
            (Polarity::One, &fakes.zeros[j])
        } else {
            (Polarity::Zero, &fakes.ones[j])
        };
        let rows = candidates
            .get(&TupleClass { polarity: anchor, group: j })
            .map(Vec::as_slice)
            .unwrap_or_default();
        if rows.len() < params.per_group {
            return Err(Error::Capacity(format!(
                "group {j} has {} anchor rows of polarity {anchor:?}, need {}",
                rows.len(),
                params.per_group
            )));
        }
        for (slot, fake) in index::sample(&mut rng, rows.len(), params.per_group)
            .into_iter()
            .zip(pool)
        {
            below.insert(rows[slot], fake);
        }
    }

    let mut out = Vec::with_capacity(table.len() + below.len());
    for (i, row) in table.rows().iter().enumerate() {
        out.push(row.clone());
        if let Some(fake) = below.get(&i) {
            out.push((*fake).clone());
        }
    }
    Ok(Table::from_conforming(table.schema().clone(), out))
}

/// Per-group combination tallies behind a baseline extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineReading {
    pub watermark: WatermarkSequence,
    pub ten: Vec<usize>,
    pub zero_one: Vec<usize>,
}

impl BaselineReading {
    /// Groups whose bit was decided by the coin.
    pub fn tied(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.ten.len()).filter(|&j| self.ten[j] == self.zero_one[j])
    }
}

pub fn baseline_read(
    table: &Table,
    params: &BaselineParams,
    fakes: &BaselineFakes,
    coin_seed: u64,
) -> Result<BaselineReading> {
    table.schema().check_subset(&params.match_subset)?;
    fakes.validate(params)?;
    let len = params.watermark_length;
    let mut recorded: HashMap<_, (usize, Polarity)> = HashMap::new();
    for j in 0..len {
        for t in &fakes.zeros[j] {
            recorded.insert(canonical_key_unchecked(t, &params.match_subset), (j, Polarity::Zero));
        }
        for t in &fakes.ones[j] {
            recorded.insert(canonical_key_unchecked(t, &params.match_subset), (j, Polarity::One));
        }
    }

    let mut ten = vec![0; len];
    let mut zero_one = vec![0; len];
    let rows = table.rows();
    for i in 1..rows.len() {
        let Some(&(j, lower)) = recorded.get(&canonical_key_unchecked(&rows[i], &params.match_subset)) else {
            continue;
        };
        match (classify(&rows[i - 1], params).polarity, lower) {
            (Polarity::One, Polarity::Zero) => ten[j] += 1,
            (Polarity::Zero, Polarity::One) => zero_one[j] += 1,
            _ => {}
        }
    }

    let bits = (0..len)
        .map(|j| match ten[j].cmp(&zero_one[j]) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => coin(params, coin_seed, j),
        })
        .collect();
    Ok(BaselineReading {
        watermark: WatermarkSequence::new(bits)?,
        ten,
        zero_one,
    })
}

/// Majority of "10" over "01" combinations per group; ties go to a keyed
/// coin seeded by `coin_seed`.
pub fn baseline_extract(
    table: &Table,
    params: &BaselineParams,
    fakes: &BaselineFakes,
    coin_seed: u64,
) -> Result<WatermarkSequence> {
    Ok(baseline_read(table, params, fakes, coin_seed)?.watermark)
}

/// Every user ranked by Hamming distance to `extracted`, ties in codebook
/// order. Unlike the fake-group scheme, baseline errors go both ways, so
/// there is no covering filter.
pub fn hamming_ranking(extracted: &WatermarkSequence, codebook: &Codebook) -> Result<Vec<Suspect>> {
    if extracted.len() != codebook.watermark_length() {
        return Err(Error::domain(format!(
            "extracted watermark has {} bits, codebook uses {}",
            extracted.len(),
            codebook.watermark_length()
        )));
    }
    let mut ranked: Vec<(usize, usize)> = codebook
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.watermark.hamming(extracted), i))
        .collect();
    ranked.sort_unstable();
    Ok(ranked
        .into_iter()
        .map(|(d, i)| Suspect {
            user: codebook.entries()[i].user.clone(),
            hamming_distance: d,
        })
        .collect())
}

pub fn baseline_identify(extracted: &WatermarkSequence, codebook: &Codebook) -> Result<ExtractionResult> {
    let mut suspects = hamming_ranking(extracted, codebook)?;
    let exact_match = codebook.user_of(extracted).map(str::to_owned);
    if exact_match.is_some() {
        suspects.truncate(1);
    }
    Ok(ExtractionResult {
        extracted: extracted.clone(),
        exact_match,
        suspects,
    })
}

/// Everything the owner keeps to extract baseline watermarks later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineMetadata {
    pub params: BaselineParams,
    pub schema: Schema,
    pub codebook: Codebook,
    pub fakes: BaselineFakes,
}

impl BaselineMetadata {
    pub fn validate(&self) -> Result<()> {
        self.schema.check_subset(&self.params.match_subset)?;
        if self.codebook.watermark_length() != self.params.watermark_length {
            return Err(Error::validation("codebook length differs from baseline L"));
        }
        self.fakes.validate(&self.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta: BaselineMetadata = serde_json::from_str(&text)?;
        meta.validate()?;
        Ok(meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{delete_random, AttackSpec};
    use crate::fakegen::GeneratorSpec;
    use crate::sample::synthetic_table;

    fn setup(n: usize, len: usize, x: usize) -> (Table, BaselineParams, BaselineFakes) {
        let table = synthetic_table(n, 21);
        let generator = FakeGenerator::new(&table, GeneratorSpec::mimic(3).with_key_column(Some(0))).unwrap();
        let params = BaselineParams::new(len, x, "secret", generator.match_subset().to_vec()).unwrap();
        let fakes = BaselineFakes::generate(&generator, &params, 8).unwrap();
        (table, params, fakes)
    }

    #[test]
    fn classification_is_deterministic() {
        let (table, params, _) = setup(20, 4, 1);
        for row in table.rows() {
            assert_eq!(classify(row, &params), classify(&row.clone(), &params));
        }
    }

    #[test]
    fn classes_are_balanced() {
        let table = synthetic_table(10_000, 2);
        let params = BaselineParams::new(6, 1, "k", table.schema().default_match_subset(Some(0))).unwrap();
        let mut ones = 0usize;
        let mut groups = [0usize; 6];
        for row in table.rows() {
            let c = classify(row, &params);
            ones += (c.polarity == Polarity::One) as usize;
            groups[c.group] += 1;
        }
        let n = table.len() as f64;
        assert!((ones as f64 / n - 0.5).abs() <= 0.03);
        for g in groups {
            assert!((g as f64 / n - 1.0 / 6.0).abs() <= 0.03);
        }
    }

    #[test]
    fn different_keys_classify_independently() {
        let table = synthetic_table(10_000, 2);
        let subset = table.schema().default_match_subset(Some(0));
        let a = BaselineParams::new(2, 1, "alpha", subset.clone()).unwrap();
        let b = BaselineParams::new(2, 1, "beta", subset).unwrap();
        let xs: Vec<f64> = table
            .rows()
            .iter()
            .map(|r| (classify(r, &a).polarity == Polarity::One) as u8 as f64)
            .collect();
        let ys: Vec<f64> = table
            .rows()
            .iter()
            .map(|r| (classify(r, &b).polarity == Polarity::One) as u8 as f64)
            .collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
        let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n).sqrt();
        // |r| < 4 / sqrt(n) for independent streams
        assert!((cov / (sx * sy)).abs() < 0.04);
    }

    #[test]
    fn inserts_x_times_l_rows() {
        let (table, params, fakes) = setup(200, 2, 1);
        for w in ["00", "01", "10", "11"] {
            let out = baseline_embed(&table, &w.parse().unwrap(), &params, &fakes, 4).unwrap();
            assert_eq!(out.len(), table.len() + 2);
        }
        let (table, params, fakes) = setup(500, 4, 3);
        let out = baseline_embed(&table, &"1000".parse().unwrap(), &params, &fakes, 4).unwrap();
        assert_eq!(out.len(), table.len() + 12);
    }

    #[test]
    fn roundtrip_every_watermark() {
        for len in 1..=6 {
            let (table, params, fakes) = setup(600, len, 2);
            for value in 0..(1u64 << len) {
                let w = WatermarkSequence::from_value(value, len).unwrap();
                let out = baseline_embed(&table, &w, &params, &fakes, value).unwrap();
                let reading = baseline_read(&out, &params, &fakes, 0).unwrap();
                assert_eq!(reading.watermark, w, "L={len}");
                assert_eq!(reading.tied().count(), 0);
            }
        }
    }

    #[test]
    fn wiped_group_is_a_fair_coin() {
        let (table, params, fakes) = setup(300, 3, 2);
        let w: WatermarkSequence = "101".parse().unwrap();
        let out = baseline_embed(&table, &w, &params, &fakes, 1).unwrap();
        let wiped = out.retain_rows(|_, r| classify(r, &params).group != 1);
        let trials = 1000;
        let ones = (0..trials)
            .filter(|&s| baseline_extract(&wiped, &params, &fakes, s).unwrap().bit(1))
            .count();
        let frac = ones as f64 / trials as f64;
        assert!((0.45..=0.55).contains(&frac), "{frac}");
        // Surviving groups are still read correctly.
        let r = baseline_read(&wiped, &params, &fakes, 0).unwrap();
        assert!(r.watermark.bit(0) && r.watermark.bit(2));
    }

    #[test]
    fn empty_table_reads_coins() {
        let (table, params, fakes) = setup(100, 4, 1);
        let empty = Table::empty(table.schema().clone());
        let r = baseline_read(&empty, &params, &fakes, 5).unwrap();
        assert_eq!(r.tied().count(), 4);
    }

    #[test]
    fn missing_anchors_is_capacity_error() {
        let (table, params, fakes) = setup(4, 6, 3);
        let err = baseline_embed(&table, &"000000".parse().unwrap(), &params, &fakes, 0).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn deletion_only_ties_never_flips() {
        let (table, params, fakes) = setup(2000, 4, 2);
        let w: WatermarkSequence = "0110".parse().unwrap();
        let out = baseline_embed(&table, &w, &params, &fakes, 9).unwrap();
        for seed in 0..50 {
            let attacked = delete_random(&out, &AttackSpec::new(0.7, seed).unwrap());
            let r = baseline_read(&attacked, &params, &fakes, seed).unwrap();
            for j in 0..4 {
                if r.ten[j] != r.zero_one[j] {
                    assert_eq!(r.watermark.bit(j), w.bit(j));
                }
            }
        }
    }

    #[test]
    fn metadata_roundtrip() {
        let (table, params, fakes) = setup(200, 2, 1);
        let meta = BaselineMetadata {
            params,
            schema: table.schema().clone(),
            codebook: crate::codebook::assign(&["a", "b", "c"], 2).unwrap(),
            fakes,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.json");
        meta.save(&path).unwrap();
        assert_eq!(BaselineMetadata::load(&path).unwrap(), meta);
    }

    #[test]
    fn hamming_ranking_has_no_covering_filter() {
        let cb = crate::codebook::assign(&["a", "b", "c", "d"], 2).unwrap(); // 00 01 10 11
        let w = |s: &str| s.parse::<WatermarkSequence>().unwrap();
        let users = |r: Vec<Suspect>| r.into_iter().map(|s| (s.user, s.hamming_distance)).collect::<Vec<_>>();
        assert_eq!(
            users(hamming_ranking(&w("01"), &cb).unwrap()),
            [("b".into(), 0), ("a".into(), 1), ("d".into(), 1), ("c".into(), 2)]
        );
        let r = baseline_identify(&w("11"), &cb).unwrap();
        assert_eq!(r.exact_match.as_deref(), Some("d"));
        assert_eq!(r.suspects.len(), 1);
        let cb3 = crate::codebook::assign(&["a", "b", "c"], 2).unwrap();
        let r = baseline_identify(&w("11"), &cb3).unwrap();
        assert_eq!(r.exact_match, None);
        assert_eq!(users(r.suspects), [("b".into(), 1), ("c".into(), 1), ("a".into(), 2)]);
        assert!(hamming_ranking(&w("011"), &cb).is_err());
    }
}
