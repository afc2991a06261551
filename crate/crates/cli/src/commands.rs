use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use fakemark::attacks::{delete_random, AttackSpec};
use fakemark::baseline::{
    baseline_embed, baseline_identify, baseline_read, BaselineFakes, BaselineMetadata, BaselineParams,
};
use fakemark::codebook::{assign, default_user_ids, watermark_length, Codebook, WatermarkSequence};
use fakemark::experiments::{
    aggregate, run_comparison, run_robustness, run_transparency, save_csv, write_csv, ExperimentGrid,
};
use fakemark::fakegen::{FakeGenerator, GeneratorKind, GeneratorSpec};
use fakemark::sample::synthetic_table;
use fakemark::store::{load_metadata, load_table, save_metadata, save_table, Schema, Table, WatermarkMetadata};
use fakemark::watermark::{embed, extract, identify, ExtractionResult, SchemeParams};
use fakemark::{analytics, Error, Result};
use serde::Serialize;

use crate::{Command, ExperimentArgs, ExperimentKind, Format, TableArgs};

pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Io { .. } | Error::Transport(_) => 4,
        Error::Csv(inner) if inner.is_io_error() => 4,
        _ => 3,
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Assign {
            users,
            user_ids,
            x,
            seed,
            out,
        } => {
            let ids = match (users, user_ids) {
                (_, Some(ids)) => ids,
                (Some(n), None) => default_user_ids(n),
                (None, None) => unreachable!("clap requires one of --users / --user-ids"),
            };
            let params = SchemeParams::new(ids.len(), x, seed)?;
            let codebook = assign(&ids, params.watermark_length)?;
            let meta = WatermarkMetadata::new(params, codebook, None, None)?;
            save_metadata(&meta, &out)?;
            eprintln!(
                "assigned {} users, L = {}, x = {}",
                meta.params.n_u, meta.params.watermark_length, meta.params.per_group
            );
            Ok(())
        }
        Command::Genfake {
            table,
            meta,
            key_column,
            endpoint,
            timeout,
            max_retries,
            seed,
            out,
        } => {
            let db = read_table(&table)?;
            let mut metadata = load_metadata(&meta)?;
            let key_column = key_column
                .map(|k| resolve_column(db.schema(), &k))
                .transpose()?;
            let kind = match endpoint {
                Some(endpoint) => GeneratorKind::ExternalService {
                    endpoint,
                    timeout_secs: timeout,
                },
                None => GeneratorKind::StatisticalMimic,
            };
            let spec = GeneratorSpec {
                kind,
                seed: seed.unwrap_or(metadata.params.seed),
                max_retries,
                key_column,
            };
            let tf = FakeGenerator::new(&db, spec)?
                .generate(metadata.params.watermark_length, metadata.params.per_group)?;
            metadata.fake_tuples = Some(tf);
            metadata.key_column = key_column;
            metadata.validate()?;
            save_metadata(&metadata, out.as_ref().unwrap_or(&meta))?;
            eprintln!(
                "generated {} groups of {} fake tuples",
                metadata.params.watermark_length, metadata.params.per_group
            );
            Ok(())
        }
        Command::Embed {
            table,
            meta,
            user,
            seed,
            out,
        } => {
            let db = read_table(&table)?;
            let metadata = load_metadata(&meta)?;
            let (index, w) = lookup(&metadata.codebook, &user)?;
            let seed = seed.unwrap_or(metadata.params.user_seed(index));
            let marked = embed(&db, w, metadata.fakes()?, seed)?;
            save_table(&marked, &out)?;
            eprintln!("embedded {w} for {user}: {} fake tuples", marked.len() - db.len());
            Ok(())
        }
        Command::Extract { table, meta, format } => {
            let db = read_table(&table)?;
            let metadata = load_metadata(&meta)?;
            let w = extract(&db, metadata.fakes()?)?;
            print_result(&identify(&w, &metadata.codebook)?, format)
        }
        Command::Attack {
            table,
            p,
            seed,
            out,
        } => {
            let db = read_table(&table)?;
            let attacked = delete_random(&db, &AttackSpec::new(p, seed)?);
            save_table(&attacked, &out)?;
            eprintln!("kept {} of {} rows", attacked.len(), db.len());
            Ok(())
        }
        Command::Theory {
            n,
            x,
            len,
            n_u,
            p,
            out,
        } => {
            let len = match len {
                Some(len) => len,
                None => watermark_length(n_u)?,
            };
            let rows = analytics::theory_table::<f64>(n, x, len, n_u, &parse_ratios(&p)?)?;
            emit_csv(&rows, out.as_deref())
        }
        Command::Experiment(args) => experiment(args),
        Command::BaselineEmbed {
            table,
            meta,
            user,
            marks,
            key,
            fake_seed,
            seed,
            out,
        } => {
            let db = read_table(&table)?;
            let metadata = load_metadata(&meta)?;
            let (index, w) = lookup(&metadata.codebook, &user)?;
            let baseline = if marks.exists() {
                let existing = BaselineMetadata::load(&marks)?;
                if &existing.schema != db.schema() {
                    return Err(Error::Validation(format!(
                        "{} was made for a table with a different schema",
                        marks.display()
                    )));
                }
                existing
            } else {
                let key = key.ok_or_else(|| {
                    Error::Domain("--key (or FAKEMARK_BASELINE_KEY) is required to create baseline marks".into())
                })?;
                let spec = GeneratorSpec::mimic(fake_seed.unwrap_or(metadata.params.seed))
                    .with_key_column(metadata.key_column);
                let generator = FakeGenerator::new(&db, spec)?;
                let params = BaselineParams::new(
                    metadata.params.watermark_length,
                    metadata.params.per_group,
                    key,
                    generator.match_subset().to_vec(),
                )?;
                let fakes = BaselineFakes::generate(&generator, &params, fake_seed.unwrap_or(metadata.params.seed))?;
                let created = BaselineMetadata {
                    params,
                    schema: db.schema().clone(),
                    codebook: metadata.codebook.clone(),
                    fakes,
                };
                created.save(&marks)?;
                created
            };
            let seed = seed.unwrap_or(metadata.params.user_seed(index));
            let marked = baseline_embed(&db, w, &baseline.params, &baseline.fakes, seed)?;
            save_table(&marked, &out)?;
            eprintln!("embedded {w} for {user}: {} fake tuples", marked.len() - db.len());
            Ok(())
        }
        Command::BaselineExtract {
            table,
            marks,
            coin_seed,
            format,
        } => {
            let db = read_table(&table)?;
            let baseline = BaselineMetadata::load(&marks)?;
            let reading = baseline_read(&db, &baseline.params, &baseline.fakes, coin_seed)?;
            print_result(&baseline_identify(&reading.watermark, &baseline.codebook)?, format)
        }
        Command::Sample { rows, seed, out } => save_table(&synthetic_table(rows, seed), &out),
    }
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut grid = match &args.config {
        Some(path) => ExperimentGrid::load(path)?,
        None => ExperimentGrid::default(),
    };
    if let Some(seed) = args.seed {
        grid.base_seed = seed;
    }
    match args.key_column.as_deref() {
        Some("none") => grid.key_column = None,
        Some(name) => grid.key_column = Some(name.to_owned()),
        None => {}
    }

    if args.kind == ExperimentKind::Transparency {
        let n_us = if args.config.is_some() {
            grid.n_u_values.clone()
        } else {
            (1..=10).map(|i| 10 * i).collect()
        };
        let mut points = Vec::new();
        for &x in &grid.x_values {
            points.extend(run_transparency(&n_us, x)?);
        }
        if let Some(path) = &args.plot_data {
            save_csv(&points, path)?;
        }
        return emit_csv(&points, args.out.as_deref());
    }

    let table = match &args.db {
        Some(db) => read_table(&TableArgs {
            db: db.clone(),
            no_header: args.no_header,
        })?,
        None => synthetic_table(args.rows, args.sample_seed),
    };
    let records = match args.kind {
        ExperimentKind::Robustness => run_robustness(&table, &grid)?,
        ExperimentKind::Comparison => run_comparison(&table, &grid)?,
        ExperimentKind::Transparency => unreachable!(),
    };
    if let Some(path) = &args.plot_data {
        save_csv(&aggregate(&records)?, path)?;
    }
    emit_csv(&records, args.out.as_deref())
}

fn read_table(args: &TableArgs) -> Result<Table> {
    load_table(&args.db, !args.no_header)
}

fn lookup<'c>(codebook: &'c Codebook, user: &str) -> Result<(usize, &'c WatermarkSequence)> {
    let index = codebook
        .position(user)
        .ok_or_else(|| Error::Domain(format!("user {user:?} is not in the codebook")))?;
    Ok((index, &codebook.entries()[index].watermark))
}

fn resolve_column(schema: &Schema, key: &str) -> Result<usize> {
    if let Some(i) = schema.index_of(key) {
        return Ok(i);
    }
    match key.parse::<usize>() {
        Ok(i) if i < schema.arity() => Ok(i),
        _ => Err(Error::Domain(format!("no column {key:?} in the table"))),
    }
}

/// `start:stop:step` (inclusive, rounded to 12 decimals) or `a,b,c`.
pub fn parse_ratios(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Domain(format!("cannot parse deletion ratios {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(bad()),
    }
}

fn emit_csv<T: Serialize>(rows: &[T], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => save_csv(rows, path),
        None => write_csv(rows, io::stdout().lock()),
    }
}

fn print_result(result: &ExtractionResult, format: Format) -> Result<()> {
    let mut out = BufWriter::new(io::stdout().lock());
    let stdout = PathBuf::from("<stdout>");
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, result)?;
            writeln!(out).map_err(|e| Error::Io { path: stdout.clone(), source: e })?;
        }
        Format::Human => {
            let mut lines = vec![format!("extracted: {}", result.extracted)];
            lines.push(match &result.exact_match {
                Some(user) => format!("exact match: {user}"),
                None => "exact match: none".into(),
            });
            for (rank, s) in result.suspects.iter().enumerate() {
                lines.push(format!("{:>4}. {} (distance {})", rank + 1, s.user, s.hamming_distance));
            }
            writeln!(out, "{}", lines.join("\n")).map_err(|e| Error::Io { path: stdout.clone(), source: e })?;
        }
    }
    out.flush().map_err(|e| Error::Io { path: stdout, source: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_ranges() {
        assert_eq!(
            parse_ratios("0.1:0.9:0.1").unwrap(),
            [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
        );
        assert_eq!(parse_ratios("0:1:0.5").unwrap(), [0.0, 0.5, 1.0]);
        assert_eq!(parse_ratios("0.3").unwrap(), [0.3]);
        assert_eq!(parse_ratios("0.2,0.6").unwrap(), [0.2, 0.6]);
        assert!(parse_ratios("0.9:0.1:0.1").is_err());
        assert!(parse_ratios("0:1:0").is_err());
        assert!(parse_ratios("a:b").is_err());
    }
}
