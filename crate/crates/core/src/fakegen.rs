//! Fake tuple generation.
//!
//! A [`FakeTupleSet`] holds `L` groups of `x` fake tuples. Every fake tuple
//! has a canonical key (over the match subset) that is unique within the set
//! and absent from the source table, so extraction can test membership
//! without false positives.
//!
//! Rows come from a [`RowSource`]. The default source resamples each
//! attribute independently from its empirical distribution in the table; an
//! HTTP service can stand in for it (see [`external_generate`]).

use std::collections::HashSet;
use std::time::Duration;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng};
use crate::store::{canonical_key_unchecked, CanonicalKey, KeyIndex, Schema, Table, Tuple};

pub const DEFAULT_MAX_RETRIES: usize = 16;
pub const DEFAULT_SERVICE_TIMEOUT: Duration = Duration::from_secs(30);
const SERVICE_SAMPLE_ROWS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FakeTupleSet {
    schema: Schema,
    match_subset: Vec<usize>,
    groups: Vec<Vec<Tuple>>,
}

impl FakeTupleSet {
    /// Checks shape (equal non-empty groups), arity and key uniqueness.
    pub fn new(schema: Schema, match_subset: Vec<usize>, groups: Vec<Vec<Tuple>>) -> Result<Self> {
        schema.check_subset(&match_subset)?;
        let x = groups.first().map(Vec::len).unwrap_or(0);
        if groups.is_empty() || x == 0 {
            return Err(Error::validation("fake tuple set needs non-empty groups"));
        }
        let mut seen = HashSet::new();
        for (j, group) in groups.iter().enumerate() {
            if group.len() != x {
                return Err(Error::validation(format!(
                    "group {j} has {} tuples, expected {x}",
                    group.len()
                )));
            }
            for t in group {
                if t.len() != schema.arity() {
                    return Err(Error::validation(format!(
                        "fake tuple in group {j} has arity {}, schema has {}",
                        t.len(),
                        schema.arity()
                    )));
                }
                if !seen.insert(canonical_key_unchecked(t, &match_subset)) {
                    return Err(Error::validation(format!(
                        "fake tuple {t:?} in group {j} is not unique"
                    )));
                }
            }
        }
        Ok(FakeTupleSet {
            schema,
            match_subset,
            groups,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn match_subset(&self) -> &[usize] {
        &self.match_subset
    }

    pub fn groups(&self) -> &[Vec<Tuple>] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_size(&self) -> usize {
        self.groups[0].len()
    }

    pub fn keys(&self, group: usize) -> impl Iterator<Item = CanonicalKey> + '_ {
        self.groups[group]
            .iter()
            .map(|t| canonical_key_unchecked(t, &self.match_subset))
    }

    /// Fake tuples colliding with rows of `table` (over the match subset).
    pub fn collisions_with(&self, table: &Table) -> Result<usize> {
        let index = table.index(&self.match_subset)?;
        Ok(self
            .groups
            .iter()
            .flatten()
            .filter(|t| index.contains_tuple(t))
            .count())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorKind {
    StatisticalMimic,
    ExternalService {
        endpoint: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

fn default_timeout_secs() -> u64 {
    DEFAULT_SERVICE_TIMEOUT.as_secs()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// Synthetic primary-key column: excluded from matching, and filled
    /// with a fresh identifier on every fake row.
    #[serde(default)]
    pub key_column: Option<usize>,
}

fn default_retries() -> usize {
    DEFAULT_MAX_RETRIES
}

impl GeneratorSpec {
    pub fn mimic(seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::StatisticalMimic,
            seed,
            max_retries: DEFAULT_MAX_RETRIES,
            key_column: None,
        }
    }

    pub fn external(endpoint: impl Into<String>, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::ExternalService {
                endpoint: endpoint.into(),
                timeout_secs: default_timeout_secs(),
            },
            seed,
            max_retries: DEFAULT_MAX_RETRIES,
            key_column: None,
        }
    }

    pub fn with_key_column(mut self, key_column: Option<usize>) -> Self {
        self.key_column = key_column;
        self
    }
}

/// Proposes candidate fake rows; uniqueness is enforced by the caller.
pub trait RowSource {
    fn propose(&mut self, count: usize, rng: &mut Rng) -> Result<Vec<Tuple>>;
}

/// One row whose attributes are drawn independently from the table's
/// per-column empirical distributions. A configured key column gets a fresh
/// identifier instead.
pub fn statistical_mimic_row(table: &Table, key_column: Option<usize>, rng: &mut Rng) -> Tuple {
    let rows = table.rows();
    assert!(!rows.is_empty(), "cannot mimic an empty table");
    Tuple::new((0..table.schema().arity()).map(|c| {
        if Some(c) == key_column {
            fresh_identifier(rng)
        } else {
            rows[rng.random_range(0..rows.len())].values()[c].clone()
        }
    }))
}

fn fresh_identifier(rng: &mut Rng) -> String {
    format!("{}", rng.random_range(1_000_000_000u64..10_000_000_000))
}

struct MimicSource<'a> {
    table: &'a Table,
    key_column: Option<usize>,
}

impl RowSource for MimicSource<'_> {
    fn propose(&mut self, count: usize, rng: &mut Rng) -> Result<Vec<Tuple>> {
        Ok((0..count)
            .map(|_| statistical_mimic_row(self.table, self.key_column, rng))
            .collect())
    }
}

struct ServiceSource<'a> {
    table: &'a Table,
    endpoint: String,
    timeout: Duration,
    key_column: Option<usize>,
}

impl RowSource for ServiceSource<'_> {
    fn propose(&mut self, count: usize, rng: &mut Rng) -> Result<Vec<Tuple>> {
        let rows = self.table.rows();
        let samples: Vec<Tuple> = index::sample(rng, rows.len(), rows.len().min(SERVICE_SAMPLE_ROWS))
            .into_iter()
            .map(|i| rows[i].clone())
            .collect();
        let produced = external_generate(
            self.table.schema(),
            &samples,
            count,
            &self.endpoint,
            self.timeout,
        )?;
        Ok(match self.key_column {
            None => produced,
            Some(k) => produced
                .into_iter()
                .map(|t| {
                    let mut values = t.values().to_vec();
                    values[k] = fresh_identifier(rng);
                    Tuple::new(values)
                })
                .collect(),
        })
    }
}

#[derive(Serialize)]
struct ServiceRequest<'a> {
    schema: &'a Schema,
    sample_rows: &'a [Tuple],
    count: usize,
}

#[derive(Deserialize)]
struct ServiceResponse {
    rows: Vec<Vec<String>>,
}

/// Asks a text-generation service for `count` rows imitating `sample_rows`.
///
/// Protocol: `POST endpoint` with `{"schema": [...], "sample_rows": [[...]],
/// "count": n}`; the reply must be `{"rows": [[...], ...]}` with exactly
/// `count` rows of the schema's arity.
pub fn external_generate(
    schema: &Schema,
    sample_rows: &[Tuple],
    count: usize,
    endpoint: &str,
    timeout: Duration,
) -> Result<Vec<Tuple>> {
    if count == 0 {
        return Err(Error::domain("requested zero rows from generator service"));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into();
    let request = ServiceRequest {
        schema,
        sample_rows,
        count,
    };
    let mut response = agent
        .post(endpoint)
        .send_json(&request)
        .map_err(|e| Error::Transport(format!("{endpoint}: {e}")))?;
    let payload = response
        .body_mut()
        .read_to_string()
        .map_err(|e| Error::Transport(format!("{endpoint}: {e}")))?;
    parse_service_rows(schema, count, payload)
}

fn parse_service_rows(schema: &Schema, count: usize, payload: String) -> Result<Vec<Tuple>> {
    let parsed: ServiceResponse = match serde_json::from_str(&payload) {
        Ok(p) => p,
        Err(e) => {
            return Err(Error::Format {
                message: format!("response is not {{\"rows\": [[...]]}}: {e}"),
                payload,
            })
        }
    };
    if parsed.rows.len() != count {
        return Err(Error::Format {
            message: format!("expected {count} rows, got {}", parsed.rows.len()),
            payload,
        });
    }
    if let Some((i, row)) = parsed
        .rows
        .iter()
        .enumerate()
        .find(|(_, r)| r.len() != schema.arity())
    {
        return Err(Error::Format {
            message: format!(
                "row {i} has {} values, schema has {}",
                row.len(),
                schema.arity()
            ),
            payload,
        });
    }
    Ok(parsed.rows.into_iter().map(Tuple::new).collect())
}

/// Reusable generator over one source table: the table's key index is built
/// once and shared by every [`generate`](FakeGenerator::generate) call.
pub struct FakeGenerator<'a> {
    table: &'a Table,
    spec: GeneratorSpec,
    subset: Vec<usize>,
    index: KeyIndex,
}

impl<'a> FakeGenerator<'a> {
    pub fn new(table: &'a Table, spec: GeneratorSpec) -> Result<Self> {
        if let Some(k) = spec.key_column {
            if k >= table.schema().arity() {
                return Err(Error::domain(format!("key column {k} out of range")));
            }
        }
        if table.is_empty() && spec.kind == GeneratorKind::StatisticalMimic {
            return Err(Error::domain("statistical mimic needs a non-empty table"));
        }
        if spec.max_retries == 0 {
            return Err(Error::domain("max_retries must be at least 1"));
        }
        let subset = table.schema().default_match_subset(spec.key_column);
        let index = table.index(&subset)?;
        Ok(FakeGenerator {
            table,
            spec,
            subset,
            index,
        })
    }

    pub fn match_subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn generate(&self, groups: usize, per_group: usize) -> Result<FakeTupleSet> {
        self.generate_seeded(groups, per_group, self.spec.seed)
    }

    /// Same as [`generate`](Self::generate) with the spec's seed replaced.
    pub fn generate_seeded(&self, groups: usize, per_group: usize, seed: u64) -> Result<FakeTupleSet> {
        if groups == 0 || per_group == 0 {
            return Err(Error::domain("need at least one group of at least one tuple"));
        }
        let mut rng = rng_from(seed);
        let rows = self.draw_unique(groups * per_group, &mut rng, |_| true)?;
        let groups = rows.chunks(per_group).map(<[Tuple]>::to_vec).collect();
        Ok(FakeTupleSet {
            schema: self.table.schema().clone(),
            match_subset: self.subset.clone(),
            groups,
        })
    }

    /// Draws `count` rows that are new to the table, pairwise distinct, and
    /// satisfy `accept`. Gives up after `max_retries * count` proposals.
    pub fn draw_unique(
        &self,
        count: usize,
        rng: &mut Rng,
        mut accept: impl FnMut(&Tuple) -> bool,
    ) -> Result<Vec<Tuple>> {
        let mut source: Box<dyn RowSource> = match &self.spec.kind {
            GeneratorKind::StatisticalMimic => Box::new(MimicSource {
                table: self.table,
                key_column: self.spec.key_column,
            }),
            GeneratorKind::ExternalService {
                endpoint,
                timeout_secs,
            } => Box::new(ServiceSource {
                table: self.table,
                endpoint: endpoint.clone(),
                timeout: Duration::from_secs(*timeout_secs),
                key_column: self.spec.key_column,
            }),
        };
        let budget = self.spec.max_retries.saturating_mul(count);
        let mut proposed = 0;
        let mut seen = HashSet::with_capacity(count);
        let mut accepted = Vec::with_capacity(count);
        while accepted.len() < count {
            if proposed >= budget {
                return Err(Error::Generation(format!(
                    "only {} of {count} unique fake tuples after {proposed} attempts; \
                     widen the attributes or lower L*x",
                    accepted.len()
                )));
            }
            let want = (count - accepted.len()).min(budget - proposed);
            let batch = source.propose(want, rng)?;
            proposed += want;
            for row in batch {
                if row.len() != self.table.schema().arity() {
                    return Err(Error::Generation(format!(
                        "generator produced a row of arity {}",
                        row.len()
                    )));
                }
                let key = canonical_key_unchecked(&row, &self.subset);
                if !self.index.contains(&key) && !seen.contains(&key) && accept(&row) {
                    seen.insert(key);
                    accepted.push(row);
                    if accepted.len() == count {
                        break;
                    }
                }
            }
        }
        Ok(accepted)
    }
}

/// `L` groups of `x` fake tuples for `table`.
pub fn generate(table: &Table, groups: usize, per_group: usize, spec: &GeneratorSpec) -> Result<FakeTupleSet> {
    FakeGenerator::new(table, spec.clone())?.generate(groups, per_group)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::synthetic_table;
    use proptest::prelude::*;

    fn single_column(values: &[&str]) -> Table {
        Table::new(
            Schema::new(["v"]).unwrap(),
            values.iter().map(|v| Tuple::new([*v])).collect(),
        )
        .unwrap()
    }

    #[test]
    fn shape_matches_request() {
        let table = synthetic_table(500, 1);
        let tf = generate(&table, 6, 5, &GeneratorSpec::mimic(9)).unwrap();
        assert_eq!(tf.group_count(), 6);
        assert!(tf.groups().iter().all(|g| g.len() == 5));
    }

    #[test]
    fn same_seed_same_output() {
        let table = synthetic_table(500, 1);
        let spec = GeneratorSpec::mimic(77).with_key_column(Some(0));
        assert_eq!(
            generate(&table, 4, 3, &spec).unwrap(),
            generate(&table, 4, 3, &spec).unwrap()
        );
        let other = GeneratorSpec { seed: 78, ..spec.clone() };
        assert_ne!(
            generate(&table, 4, 3, &spec).unwrap(),
            generate(&table, 4, 3, &other).unwrap()
        );
    }

    #[test]
    fn no_collisions_with_default_sized_table() {
        let table = synthetic_table(10_000, 5);
        let spec = GeneratorSpec::mimic(1).with_key_column(Some(0));
        let tf = generate(&table, 6, 5, &spec).unwrap();
        // Exhaustive scan, independent of the generator's own index.
        let subset = tf.match_subset().to_vec();
        for fake in tf.groups().iter().flatten() {
            for row in table.rows() {
                assert!(subset.iter().any(|&c| fake.values()[c] != row.values()[c]));
            }
        }
    }

    #[test]
    fn single_support_column_is_copied() {
        let schema = Schema::new(["day", "n"]).unwrap();
        let rows = (0..50)
            .map(|i| Tuple::new(["Monday".to_string(), i.to_string()]))
            .collect();
        let table = Table::new(schema, rows).unwrap();
        let mut rng = rng_from(3);
        for _ in 0..20 {
            assert_eq!(statistical_mimic_row(&table, None, &mut rng).values()[0], "Monday");
        }
    }

    #[test]
    fn key_column_gets_fresh_identifier() {
        let table = synthetic_table(50, 2);
        let mut rng = rng_from(3);
        let row = statistical_mimic_row(&table, Some(0), &mut rng);
        assert!(table.rows().iter().all(|r| r.values()[0] != row.values()[0]));
    }

    #[test]
    fn one_row_table_cannot_yield_unique_fakes() {
        let table = single_column(&["only"]);
        let mut rng = rng_from(0);
        assert_eq!(statistical_mimic_row(&table, None, &mut rng), table.rows()[0]);
        let err = generate(&table, 1, 1, &GeneratorSpec::mimic(0)).unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
    }

    #[test]
    fn empty_table_rejected_for_mimic() {
        let table = Table::empty(Schema::new(["v"]).unwrap());
        assert!(matches!(
            generate(&table, 1, 1, &GeneratorSpec::mimic(0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn marginal_frequencies_follow_table() {
        let mut values = vec!["A"; 90];
        values.extend(vec!["B"; 10]);
        let table = single_column(&values);
        let mut rng = rng_from(11);
        let draws = 10_000;
        let a = (0..draws)
            .filter(|_| statistical_mimic_row(&table, None, &mut rng).values()[0] == "A")
            .count();
        let frac = a as f64 / draws as f64;
        assert!((frac - 0.9).abs() <= 0.02, "A fraction {frac}");
    }

    #[test]
    fn service_payload_validation() {
        let schema = Schema::new(["a", "b"]).unwrap();
        let ok = r#"{"rows": [["1","2"],["3","4"],["5","6"]]}"#.to_string();
        assert_eq!(parse_service_rows(&schema, 3, ok).unwrap().len(), 3);
        let short = r#"{"rows": [["1","2"],["3","4"]]}"#.to_string();
        assert!(matches!(
            parse_service_rows(&schema, 3, short),
            Err(Error::Format { .. })
        ));
        let ragged = r#"{"rows": [["1","2"],["3"],["5","6"]]}"#.to_string();
        match parse_service_rows(&schema, 3, ragged) {
            Err(Error::Format { message, payload }) => {
                assert!(message.contains("row 1"));
                assert!(payload.contains("[\"3\"]"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let garbage = "not json".to_string();
        assert!(matches!(
            parse_service_rows(&schema, 1, garbage),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn set_validation_rejects_duplicates() {
        let schema = Schema::new(["a"]).unwrap();
        let dup = vec![vec![Tuple::new(["x"])], vec![Tuple::new(["x"])]];
        assert!(FakeTupleSet::new(schema.clone(), vec![0], dup).is_err());
        let uneven = vec![vec![Tuple::new(["x"])], vec![]];
        assert!(FakeTupleSet::new(schema, vec![0], uneven).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn shape_and_disjointness(groups in 1usize..8, per_group in 1usize..8, seed in any::<u64>()) {
            let table = synthetic_table(300, 4);
            let spec = GeneratorSpec::mimic(seed).with_key_column(Some(0));
            let tf = generate(&table, groups, per_group, &spec).unwrap();
            prop_assert_eq!(tf.group_count(), groups);
            prop_assert!(tf.groups().iter().all(|g| g.len() == per_group));
            prop_assert_eq!(tf.collisions_with(&table).unwrap(), 0);
            let keys: HashSet<_> = (0..groups).flat_map(|j| tf.keys(j).collect::<Vec<_>>()).collect();
            prop_assert_eq!(keys.len(), groups * per_group);
        }
    }
}
