//! In-memory tables, canonical tuple identity and persistence.
//!
//! A [`Table`] is an ordered list of string tuples under a [`Schema`]. Row
//! order is kept because the baseline scheme reads physical adjacency;
//! duplicate rows are allowed and counted separately.
//!
//! Tuple identity for membership tests goes through [`CanonicalKey`], built
//! over a subset of attribute indices (a "match subset"). The default subset
//! is every attribute except an optional synthetic primary-key column, since
//! a leaker may renumber keys.

mod csv_io;
mod metadata;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use csv_io::{load_table, read_table, save_table, write_table};
pub use metadata::{load_metadata, save_metadata, WatermarkMetadata};

/// Ordered, unique, non-empty attribute names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Schema {
    names: Vec<String>,
}

impl Schema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::validation("schema needs at least one attribute"));
        }
        let mut seen = std::collections::HashSet::with_capacity(names.len());
        for name in &names {
            if name.is_empty() {
                return Err(Error::validation("attribute names must be non-empty"));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate attribute name {name:?}"
                )));
            }
        }
        Ok(Schema { names })
    }

    /// `col0`, `col1`, ... for headerless input.
    pub fn synthesized(arity: usize) -> Result<Self> {
        Schema::new((0..arity).map(|i| format!("col{i}")))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arity(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Every attribute index except `key_column`.
    pub fn default_match_subset(&self, key_column: Option<usize>) -> Vec<usize> {
        (0..self.arity()).filter(|&i| Some(i) != key_column).collect()
    }

    /// Checks that `subset` is non-empty, in range and free of repeats.
    pub fn check_subset(&self, subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::domain("match subset is empty"));
        }
        let mut seen = vec![false; self.arity()];
        for &i in subset {
            if i >= self.arity() {
                return Err(Error::domain(format!(
                    "attribute index {i} out of range for arity {}",
                    self.arity()
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::domain(format!("attribute index {i} repeated")));
            }
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(de)?;
        Schema::new(names).map_err(serde::de::Error::custom)
    }
}

/// One row. Values are shared, so cloning a tuple (and hence a table) does
/// not copy strings.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Tuple(Arc<[String]>);

impl Tuple {
    pub fn new<S: Into<String>>(values: impl IntoIterator<Item = S>) -> Self {
        Tuple(values.into_iter().map(Into::into).collect())
    }

    pub fn values(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&str> {
        self.0.get(i).map(String::as_str)
    }
}

impl fmt::Debug for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl Serialize for Tuple {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Tuple {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        Ok(Tuple::new(Vec::<String>::deserialize(de)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    schema: Schema,
    rows: Vec<Tuple>,
}

impl Table {
    pub fn new(schema: Schema, rows: Vec<Tuple>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.arity() {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: schema.arity(),
                    found: row.len(),
                });
            }
        }
        Ok(Table { schema, rows })
    }

    pub fn empty(schema: Schema) -> Self {
        Table {
            schema,
            rows: Vec::new(),
        }
    }

    /// Caller guarantees every row has the schema's arity.
    pub(crate) fn from_conforming(schema: Schema, rows: Vec<Tuple>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == schema.arity()));
        Table { schema, rows }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Tuple] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn into_rows(self) -> Vec<Tuple> {
        self.rows
    }

    /// Keeps the rows for which `keep` returns true, preserving order.
    pub fn retain_rows(&self, mut keep: impl FnMut(usize, &Tuple) -> bool) -> Table {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .filter(|(i, r)| keep(*i, r))
            .map(|(_, r)| r.clone())
            .collect();
        Table::from_conforming(self.schema.clone(), rows)
    }

    pub fn index(&self, subset: &[usize]) -> Result<KeyIndex> {
        KeyIndex::build(self, subset)
    }
}

const KEY_SEPARATOR: char = '|';
const KEY_ESCAPE: char = '\\';

/// Injective encoding of a tuple's values over a match subset.
///
/// Values are joined with `|` after escaping `\` and `|`, so distinct value
/// lists of the same length never share a key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(String);

impl CanonicalKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn canonical_key(tuple: &Tuple, subset: &[usize]) -> Result<CanonicalKey> {
    if let Some(&bad) = subset.iter().find(|&&i| i >= tuple.len()) {
        return Err(Error::domain(format!(
            "attribute index {bad} out of range for arity {}",
            tuple.len()
        )));
    }
    Ok(canonical_key_unchecked(tuple, subset))
}

pub(crate) fn canonical_key_unchecked(tuple: &Tuple, subset: &[usize]) -> CanonicalKey {
    let values = tuple.values();
    let mut key = String::with_capacity(subset.iter().map(|&i| values[i].len() + 1).sum());
    for (n, &i) in subset.iter().enumerate() {
        if n > 0 {
            key.push(KEY_SEPARATOR);
        }
        for c in values[i].chars() {
            if c == KEY_SEPARATOR || c == KEY_ESCAPE {
                key.push(KEY_ESCAPE);
            }
            key.push(c);
        }
    }
    CanonicalKey(key)
}

/// Multiset of canonical keys over one match subset, built once per table.
#[derive(Debug, Clone)]
pub struct KeyIndex {
    subset: Vec<usize>,
    counts: HashMap<CanonicalKey, usize>,
}

impl KeyIndex {
    pub fn build(table: &Table, subset: &[usize]) -> Result<Self> {
        table.schema().check_subset(subset)?;
        let mut counts = HashMap::with_capacity(table.len());
        for row in table.rows() {
            *counts
                .entry(canonical_key_unchecked(row, subset))
                .or_insert(0) += 1;
        }
        Ok(KeyIndex {
            subset: subset.to_vec(),
            counts,
        })
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn contains(&self, key: &CanonicalKey) -> bool {
        self.counts.contains_key(key)
    }

    pub fn contains_tuple(&self, tuple: &Tuple) -> bool {
        self.contains(&canonical_key_unchecked(tuple, &self.subset))
    }

    pub fn count(&self, key: &CanonicalKey) -> usize {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// Number of distinct keys.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// One-shot membership test. Builds a [`KeyIndex`]; use the index directly
/// when asking more than once.
pub fn contains(table: &Table, key: &CanonicalKey, subset: &[usize]) -> Result<bool> {
    Ok(KeyIndex::build(table, subset)?.contains(key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(values: &[&str]) -> Tuple {
        Tuple::new(values.iter().copied())
    }

    #[test]
    fn schema_rejects_duplicates_and_empty() {
        assert!(Schema::new(["a", "b"]).is_ok());
        assert!(matches!(Schema::new(["a", "a"]), Err(Error::Validation(_))));
        assert!(matches!(Schema::new([""]), Err(Error::Validation(_))));
        assert!(matches!(
            Schema::new(Vec::<String>::new()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn default_subset_skips_key_column() {
        let s = Schema::new(["id", "a", "b"]).unwrap();
        assert_eq!(s.default_match_subset(Some(0)), vec![1, 2]);
        assert_eq!(s.default_match_subset(None), vec![0, 1, 2]);
    }

    #[test]
    fn same_tuple_same_key() {
        let a = t(&["x", "y", "z"]);
        assert_eq!(
            canonical_key(&a, &[0, 1, 2]).unwrap(),
            canonical_key(&a.clone(), &[0, 1, 2]).unwrap()
        );
    }

    #[test]
    fn excluded_attribute_does_not_matter() {
        let a = t(&["1", "Tokyo", "Friday"]);
        let b = t(&["2", "Tokyo", "Friday"]);
        assert_eq!(
            canonical_key(&a, &[1, 2]).unwrap(),
            canonical_key(&b, &[1, 2]).unwrap()
        );
        assert_ne!(
            canonical_key(&a, &[0, 1, 2]).unwrap(),
            canonical_key(&b, &[0, 1, 2]).unwrap()
        );
    }

    #[test]
    fn separator_inside_values_is_escaped() {
        let a = t(&["a|b", "c"]);
        let b = t(&["a", "b|c"]);
        assert_ne!(
            canonical_key(&a, &[0, 1]).unwrap(),
            canonical_key(&b, &[0, 1]).unwrap()
        );
        let c = t(&["a\\", "|b"]);
        let d = t(&["a\\|", "b"]);
        assert_ne!(
            canonical_key(&c, &[0, 1]).unwrap(),
            canonical_key(&d, &[0, 1]).unwrap()
        );
    }

    #[test]
    fn out_of_range_subset_is_domain_error() {
        assert!(matches!(
            canonical_key(&t(&["a"]), &[1]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn contains_tracks_deletion() {
        let schema = Schema::new(["a", "b"]).unwrap();
        let rows = vec![t(&["1", "x"]), t(&["2", "y"])];
        let table = Table::new(schema, rows.clone()).unwrap();
        let key = canonical_key(&rows[1], &[0, 1]).unwrap();
        assert!(contains(&table, &key, &[0, 1]).unwrap());
        let never = canonical_key(&t(&["3", "z"]), &[0, 1]).unwrap();
        assert!(!contains(&table, &never, &[0, 1]).unwrap());
        let without = table.retain_rows(|i, _| i != 1);
        assert!(!contains(&without, &key, &[0, 1]).unwrap());
    }

    #[test]
    fn table_rejects_ragged_rows() {
        let schema = Schema::new(["a", "b"]).unwrap();
        let err = Table::new(schema, vec![t(&["1", "2"]), t(&["1"])]).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { row: 1, .. }));
    }

    fn adversarial_value() -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof![Just('|'), Just('\\'), Just('a'), Just('b')], 0..5)
            .prop_map(|cs| cs.into_iter().collect())
    }

    proptest! {
        #[test]
        fn keys_are_injective(
            a in proptest::collection::vec(adversarial_value(), 3),
            b in proptest::collection::vec(adversarial_value(), 3),
        ) {
            let ka = canonical_key(&Tuple::new(a.clone()), &[0, 1, 2]).unwrap();
            let kb = canonical_key(&Tuple::new(b.clone()), &[0, 1, 2]).unwrap();
            prop_assert_eq!(a == b, ka == kb);
        }

        #[test]
        fn every_row_is_contained(
            rows in proptest::collection::vec(proptest::collection::vec(adversarial_value(), 3), 1..12),
            subset in proptest::sample::subsequence(vec![0usize, 1, 2], 1..=3),
        ) {
            let schema = Schema::new(["a", "b", "c"]).unwrap();
            let table = Table::new(schema, rows.into_iter().map(Tuple::new).collect()).unwrap();
            let index = table.index(&subset).unwrap();
            for row in table.rows() {
                prop_assert!(index.contains(&canonical_key(row, &subset).unwrap()));
            }
        }
    }
}
