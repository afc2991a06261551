//! Simulation harness: repeated embed / attack / extract trials over a grid
//! of `(n_u, x, p)` points, plus plot-ready aggregates.
//!
//! Every trial draws its randomness from a seed derived from the grid's base
//! seed, the grid point and the trial index, so any subset of a grid
//! reproduces the same records and parallel execution never changes the
//! output.

use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{ep_baseline, ep_sparse, ni_bound, ni_expected, p_cd_exact};
use crate::attacks::{delete_random, deletion_count, AttackSpec};
use crate::baseline::{baseline_embed, baseline_read, hamming_ranking, BaselineFakes, BaselineParams};
use crate::codebook::{assign, default_user_ids, watermark_length, Codebook, WatermarkSequence};
use crate::error::{Error, Result};
use crate::fakegen::{FakeGenerator, GeneratorSpec};
use crate::rng::{derive_seed, rng_from};
use crate::store::Table;
use crate::watermark::{embed, extract, suspect_ranking};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Spsw,
    Baseline,
}

/// One attacked copy. Serializes to one row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scheme: Scheme,
    pub n: usize,
    pub n_u: usize,
    #[serde(rename = "L")]
    pub watermark_length: usize,
    pub x: usize,
    pub p: f64,
    pub trial: usize,
    pub seed: u64,
    pub user: String,
    pub watermark: WatermarkSequence,
    pub extracted: WatermarkSequence,
    pub exact_match: bool,
    pub bit_accuracy: f64,
    pub suspect_rank_of_truth: usize,
    /// Fake tuples inserted into this copy.
    pub inserted: usize,
    /// Rows left after the attack.
    pub survivors: usize,
    /// '1' bits of the embedded watermark.
    pub ones: usize,
    /// '1' bits still read as '1' after the attack.
    pub ones_survived: usize,
    /// Groups with no evidence left (baseline: decided by the coin).
    pub tied_groups: usize,
}

fn default_trials() -> usize {
    50
}

fn default_p_values() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    #[serde(default = "ExperimentGrid::default_x")]
    pub x_values: Vec<usize>,
    #[serde(default = "default_p_values")]
    pub p_values: Vec<f64>,
    #[serde(default = "ExperimentGrid::default_n_u")]
    pub n_u_values: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Column left out of fake-tuple matching and given fresh identifiers.
    #[serde(default)]
    pub key_column: Option<String>,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            x_values: Self::default_x(),
            p_values: default_p_values(),
            n_u_values: Self::default_n_u(),
            trials: default_trials(),
            base_seed: 0,
            key_column: Some(crate::sample::KEY_COLUMN.to_owned()),
        }
    }
}

impl ExperimentGrid {
    fn default_x() -> Vec<usize> {
        vec![5]
    }

    fn default_n_u() -> Vec<usize> {
        vec![50]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let grid: ExperimentGrid = serde_json::from_str(&text)?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_values.is_empty() || self.p_values.is_empty() || self.n_u_values.is_empty() {
            return Err(Error::validation("grid lists must be non-empty"));
        }
        if self.trials == 0 {
            return Err(Error::validation("trials must be at least 1"));
        }
        if self.x_values.contains(&0) {
            return Err(Error::validation("x values must be at least 1"));
        }
        if let Some(&p) = self.p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::validation(format!("deletion ratio {p} outside [0, 1]")));
        }
        for &n_u in &self.n_u_values {
            watermark_length(n_u).map_err(|e| Error::validation(e.to_string()))?;
        }
        Ok(())
    }

    fn key_column(&self, table: &Table) -> Result<Option<usize>> {
        match &self.key_column {
            None => Ok(None),
            Some(name) => table
                .schema()
                .index_of(name)
                .map(Some)
                .ok_or_else(|| Error::domain(format!("key column {name:?} not in table"))),
        }
    }

    fn points(&self) -> Vec<(usize, usize, f64, usize)> {
        let mut out = Vec::new();
        for &n_u in &self.n_u_values {
            for &x in &self.x_values {
                for &p in &self.p_values {
                    for t in 0..self.trials {
                        out.push((n_u, x, p, t));
                    }
                }
            }
        }
        out
    }
}

// Sub-stream tags under a trial seed.
const FAKES: u64 = 1;
const USER: u64 = 2;
const EMBED: u64 = 3;
const ATTACK: u64 = 4;
const BASELINE_KEY: u64 = 5;
const BASELINE_FAKES: u64 = 6;
const BASELINE_EMBED: u64 = 7;
const BASELINE_COIN: u64 = 8;

/// Seed of trial `trial` at grid point `(n_u, x, p)`.
pub fn trial_seed(base: u64, n_u: usize, x: usize, p: f64, trial: usize) -> u64 {
    derive_seed(base, &[n_u as u64, x as u64, p.to_bits(), trial as u64])
}

struct Harness<'a> {
    table: &'a Table,
    generator: FakeGenerator<'a>,
    grid: &'a ExperimentGrid,
    codebooks: Vec<(usize, Codebook)>,
}

struct Trial<'h> {
    n_u: usize,
    x: usize,
    p: f64,
    trial: usize,
    seed: u64,
    codebook: &'h Codebook,
    user: usize,
}

impl<'a> Harness<'a> {
    fn new(table: &'a Table, grid: &'a ExperimentGrid) -> Result<Self> {
        grid.validate()?;
        let p_max = grid.p_values.iter().copied().fold(0.0, f64::max);
        if table.is_empty() || deletion_count(table.len(), p_max) >= table.len() {
            return Err(Error::domain(format!(
                "a table of {} rows has no survivors at p = {p_max}",
                table.len()
            )));
        }
        let spec = GeneratorSpec::mimic(grid.base_seed).with_key_column(grid.key_column(table)?);
        let generator = FakeGenerator::new(table, spec)?;
        let codebooks = grid
            .n_u_values
            .iter()
            .map(|&n_u| Ok((n_u, assign(&default_user_ids(n_u), watermark_length(n_u)?)?)))
            .collect::<Result<_>>()?;
        Ok(Harness {
            table,
            generator,
            grid,
            codebooks,
        })
    }

    fn trials(&self) -> Vec<Trial<'_>> {
        self.grid
            .points()
            .into_iter()
            .map(|(n_u, x, p, trial)| {
                let codebook = &self.codebooks.iter().find(|(k, _)| *k == n_u).expect("assigned").1;
                let seed = trial_seed(self.grid.base_seed, n_u, x, p, trial);
                let user = rng_from(derive_seed(seed, &[USER])).random_range(0..n_u);
                Trial {
                    n_u,
                    x,
                    p,
                    trial,
                    seed,
                    codebook,
                    user,
                }
            })
            .collect()
    }

    fn record(&self, t: &Trial<'_>, scheme: Scheme, truth: &WatermarkSequence) -> TrialRecord {
        TrialRecord {
            scheme,
            n: self.table.len(),
            n_u: t.n_u,
            watermark_length: truth.len(),
            x: t.x,
            p: t.p,
            trial: t.trial,
            seed: t.seed,
            user: t.codebook.entries()[t.user].user.clone(),
            watermark: truth.clone(),
            extracted: truth.clone(),
            exact_match: true,
            bit_accuracy: 1.0,
            suspect_rank_of_truth: 1,
            inserted: 0,
            survivors: 0,
            ones: truth.popcount(),
            ones_survived: 0,
            tied_groups: 0,
        }
    }

    fn run_spsw(&self, t: &Trial<'_>) -> Result<TrialRecord> {
        let entry = &t.codebook.entries()[t.user];
        let w = &entry.watermark;
        let len = w.len();
        let tf = self
            .generator
            .generate_seeded(len, t.x, derive_seed(t.seed, &[FAKES]))?;
        let marked = embed(self.table, w, &tf, derive_seed(t.seed, &[EMBED]))?;
        let attacked = delete_random(&marked, &AttackSpec::new(t.p, derive_seed(t.seed, &[ATTACK]))?);
        let extracted = extract(&attacked, &tf)?;
        let ranking = suspect_ranking(&extracted, t.codebook)?;
        let rank = 1 + ranking
            .iter()
            .position(|s| s.user == entry.user)
            .expect("every user is ranked");
        let ones_survived = w.ones().filter(|&j| extracted.bit(j)).count();
        Ok(TrialRecord {
            exact_match: &extracted == w,
            bit_accuracy: 1.0 - extracted.hamming(w) as f64 / len as f64,
            suspect_rank_of_truth: rank,
            inserted: marked.len() - self.table.len(),
            survivors: attacked.len(),
            ones_survived,
            tied_groups: w.popcount() - ones_survived,
            extracted,
            ..self.record(t, Scheme::Spsw, w)
        })
    }

    fn run_baseline(&self, t: &Trial<'_>) -> Result<TrialRecord> {
        let w = &t.codebook.entries()[t.user].watermark;
        let len = w.len();
        let key = format!("{:016x}", derive_seed(t.seed, &[BASELINE_KEY]));
        let params = BaselineParams::new(len, t.x, key, self.generator.match_subset().to_vec())?;
        let fakes = BaselineFakes::generate(&self.generator, &params, derive_seed(t.seed, &[BASELINE_FAKES]))?;
        let marked = baseline_embed(self.table, w, &params, &fakes, derive_seed(t.seed, &[BASELINE_EMBED]))?;
        let attacked = delete_random(&marked, &AttackSpec::new(t.p, derive_seed(t.seed, &[ATTACK]))?);
        let reading = baseline_read(&attacked, &params, &fakes, derive_seed(t.seed, &[BASELINE_COIN]))?;
        let extracted = reading.watermark.clone();
        let truth_distance = extracted.hamming(w);
        let rank = 1 + hamming_ranking(&extracted, t.codebook)?
            .iter()
            .position(|s| s.user == t.codebook.entries()[t.user].user)
            .expect("every user is ranked");
        Ok(TrialRecord {
            exact_match: &extracted == w,
            bit_accuracy: 1.0 - truth_distance as f64 / len as f64,
            suspect_rank_of_truth: rank,
            inserted: marked.len() - self.table.len(),
            survivors: attacked.len(),
            ones_survived: w.ones().filter(|&j| extracted.bit(j)).count(),
            tied_groups: reading.tied().count(),
            extracted,
            ..self.record(t, Scheme::Baseline, w)
        })
    }
}

fn in_context<T>(t: &Trial<'_>, scheme: Scheme, r: Result<T>) -> Result<T> {
    r.map_err(|e| {
        e.with_context(format!(
            "{scheme:?} trial {} at n_u={} x={} p={}",
            t.trial, t.n_u, t.x, t.p
        ))
    })
}

/// Embeds for one random user per trial, deletes a `p` share of rows,
/// extracts and ranks suspects. Records come out ordered by grid point
/// (`n_u`, `x`, `p` in grid order) and trial.
pub fn run_robustness(table: &Table, grid: &ExperimentGrid) -> Result<Vec<TrialRecord>> {
    let harness = Harness::new(table, grid)?;
    harness
        .trials()
        .par_iter()
        .map(|t| in_context(t, Scheme::Spsw, harness.run_spsw(t)))
        .collect()
}

/// Each trial runs both schemes for the same user under the same attack
/// seed. Records alternate spsw, baseline.
pub fn run_comparison(table: &Table, grid: &ExperimentGrid) -> Result<Vec<TrialRecord>> {
    let harness = Harness::new(table, grid)?;
    let pairs = harness
        .trials()
        .par_iter()
        .map(|t| {
            Ok([
                in_context(t, Scheme::Spsw, harness.run_spsw(t))?,
                in_context(t, Scheme::Baseline, harness.run_baseline(t))?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransparencyPoint {
    pub n_u: usize,
    pub x: usize,
    #[serde(rename = "L")]
    pub watermark_length: usize,
    pub measured_ni: f64,
    pub bound: f64,
}

/// Mean fake tuples per copy for a sparse codebook of each size, against
/// the `x * L / 2` bound.
pub fn run_transparency(n_u_values: &[usize], x: usize) -> Result<Vec<TransparencyPoint>> {
    if x == 0 {
        return Err(Error::domain("x must be at least 1"));
    }
    n_u_values
        .iter()
        .map(|&n_u| {
            let len = watermark_length(n_u)?;
            let codebook = assign(&default_user_ids(n_u), len)?;
            Ok(TransparencyPoint {
                n_u,
                x,
                watermark_length: len,
                measured_ni: ni_expected(&codebook, x),
                bound: ni_bound(x, n_u)?,
            })
        })
        .collect()
}

/// Per (scheme, n_u, x, p) summary of a record stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scheme: Scheme,
    pub n: usize,
    pub n_u: usize,
    #[serde(rename = "L")]
    pub watermark_length: usize,
    pub x: usize,
    pub p: f64,
    pub trials: usize,
    pub cr_exact: f64,
    /// Standard error of `cr_exact`.
    pub stderr: f64,
    pub cr_bit: f64,
    pub cr_suspect_top1: f64,
    /// Share of groups left without evidence: wiped '1' groups for spsw,
    /// coin-decided groups for the baseline.
    pub p_cd_observed: f64,
    /// Closed-form exact-extraction probability at the original table size.
    pub ep_theory: f64,
}

/// Groups records by (scheme, n_u, x, p) in order of first appearance.
pub fn aggregate(records: &[TrialRecord]) -> Result<Vec<Aggregate>> {
    let mut groups: Vec<Vec<&TrialRecord>> = Vec::new();
    for r in records {
        let same = |g: &&mut Vec<&TrialRecord>| {
            let h = g[0];
            h.scheme == r.scheme && h.n_u == r.n_u && h.x == r.x && h.p == r.p
        };
        match groups.iter_mut().find(|g| same(g)) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let h = g[0];
            let k = g.len() as f64;
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / k;
            let cr_exact = mean(&|r| r.exact_match as u8 as f64);
            let (wiped, slots) = match h.scheme {
                Scheme::Spsw => (
                    g.iter().map(|r| r.ones - r.ones_survived).sum::<usize>(),
                    g.iter().map(|r| r.ones).sum::<usize>(),
                ),
                Scheme::Baseline => (
                    g.iter().map(|r| r.tied_groups).sum(),
                    g.len() * h.watermark_length,
                ),
            };
            let p_cd = p_cd_exact::<f64>(h.n, h.p, h.x)?;
            Ok(Aggregate {
                scheme: h.scheme,
                n: h.n,
                n_u: h.n_u,
                watermark_length: h.watermark_length,
                x: h.x,
                p: h.p,
                trials: g.len(),
                cr_exact,
                stderr: (cr_exact * (1.0 - cr_exact) / k).sqrt(),
                cr_bit: mean(&|r| r.bit_accuracy),
                cr_suspect_top1: mean(&|r| (r.suspect_rank_of_truth == 1) as u8 as f64),
                p_cd_observed: if slots == 0 { 0.0 } else { wiped as f64 / slots as f64 },
                ep_theory: match h.scheme {
                    Scheme::Spsw => ep_sparse(h.n_u, h.watermark_length, p_cd)?,
                    Scheme::Baseline => ep_baseline(p_cd, h.watermark_length),
                },
            })
        })
        .collect()
}

/// Writes any serializable rows as CSV with a header line.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn save_csv<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(rows, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::synthetic_table;

    fn grid(p_values: Vec<f64>, trials: usize) -> ExperimentGrid {
        ExperimentGrid {
            x_values: vec![3],
            p_values,
            n_u_values: vec![10],
            trials,
            base_seed: 11,
            ..ExperimentGrid::default()
        }
    }

    #[test]
    fn no_attack_means_every_trial_matches() {
        let table = synthetic_table(400, 1);
        let records = run_robustness(&table, &grid(vec![0.0], 8)).unwrap();
        assert_eq!(records.len(), 8);
        for r in &records {
            assert!(r.exact_match);
            assert_eq!(r.bit_accuracy, 1.0);
            assert_eq!(r.suspect_rank_of_truth, 1);
            assert_eq!(r.inserted, 3 * r.ones);
            assert_eq!(r.survivors, 400 + r.inserted);
        }
    }

    #[test]
    fn comparison_pairs_and_shape() {
        let table = synthetic_table(600, 2);
        let g = ExperimentGrid {
            x_values: vec![1, 2],
            ..grid(vec![0.0, 0.5], 3)
        };
        let records = run_comparison(&table, &g).unwrap();
        assert_eq!(records.len(), 2 * 2 * 3 * 2);
        for pair in records.chunks(2) {
            assert_eq!(pair[0].scheme, Scheme::Spsw);
            assert_eq!(pair[1].scheme, Scheme::Baseline);
            assert_eq!(pair[0].seed, pair[1].seed);
            assert_eq!(pair[0].user, pair[1].user);
            assert_eq!(pair[1].inserted, pair[1].x * pair[1].watermark_length);
            if pair[0].p == 0.0 {
                assert!(pair[0].exact_match && pair[1].exact_match);
            }
        }
    }

    #[test]
    fn records_are_reproducible_and_subset_stable() {
        let table = synthetic_table(300, 3);
        let full = run_robustness(&table, &grid(vec![0.2, 0.7], 5)).unwrap();
        assert_eq!(full, run_robustness(&table, &grid(vec![0.2, 0.7], 5)).unwrap());
        let part = run_robustness(&table, &grid(vec![0.7], 5)).unwrap();
        assert_eq!(part, full[5..]);
    }

    #[test]
    fn transparency_examples() {
        let pts = run_transparency(&[2, 50], 1).unwrap();
        assert_eq!(pts[0].measured_ni, 0.5);
        assert_eq!(pts[0].bound, 0.5);
        let pts = run_transparency(&[2, 50], 5).unwrap();
        assert_eq!(pts[1].bound, 15.0);
        assert!(pts[1].measured_ni < 15.0);
    }

    #[test]
    fn aggregates_and_csv() {
        let table = synthetic_table(300, 4);
        let records = run_robustness(&table, &grid(vec![0.0, 0.9], 4)).unwrap();
        let agg = aggregate(&records).unwrap();
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].cr_exact, 1.0);
        assert_eq!(agg[0].stderr, 0.0);
        assert_eq!(agg[0].trials, 4);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        save_csv(&records, &path).unwrap();
        assert_eq!(read_records(&path).unwrap(), records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("scheme,n,n_u,L,x,p,trial,seed,user,watermark,extracted,exact_match,"));
        assert_eq!(text.lines().count(), records.len() + 1);
    }

    #[test]
    fn errors_carry_grid_point() {
        let table = synthetic_table(50, 5);
        assert!(matches!(
            run_robustness(&table, &grid(vec![1.0], 1)),
            Err(Error::Domain(_))
        ));
        // 50 rows cannot anchor 20 fakes per baseline group.
        let g = ExperimentGrid { x_values: vec![20], ..grid(vec![0.5], 1) };
        let err = run_comparison(&table, &g).unwrap_err();
        assert!(matches!(err, Error::Context { .. }), "{err}");
        assert!(err.to_string().contains("x=20"), "{err}");
    }

    #[test]
    fn grid_json_defaults_and_validation() {
        let g: ExperimentGrid = serde_json::from_str(r#"{"x_values":[1,3]}"#).unwrap();
        assert_eq!(g.n_u_values, [50]);
        assert_eq!(g.p_values.len(), 9);
        assert_eq!(g.trials, 50);
        assert!(ExperimentGrid { trials: 0, ..g.clone() }.validate().is_err());
        assert!(ExperimentGrid { p_values: vec![], ..g.clone() }.validate().is_err());
        assert!(ExperimentGrid { n_u_values: vec![1], ..g }.validate().is_err());
    }
}
