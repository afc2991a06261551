use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::store::{Schema, Table, Tuple};

/// Reads a comma-separated table. Without a header the attributes are named
/// `col0..colk` after the first record's arity.
pub fn load_table(path: impl AsRef<Path>, has_header: bool) -> Result<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(BufReader::new(file), has_header)
}

pub fn read_table<R: Read>(reader: R, has_header: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let mut schema = None;
    if has_header {
        let header = records
            .next()
            .ok_or_else(|| Error::validation("missing header line"))??;
        schema = Some(Schema::new(header.iter())?);
    }

    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let record = record?;
        let schema = match &schema {
            Some(s) => s,
            None => schema.insert(Schema::synthesized(record.len())?),
        };
        if record.len() != schema.arity() {
            return Err(Error::RaggedRow {
                row: i,
                expected: schema.arity(),
                found: record.len(),
            });
        }
        rows.push(Tuple::new(record.iter()));
    }

    let schema = schema.ok_or_else(|| Error::validation("empty input has no columns"))?;
    Ok(Table::from_conforming(schema, rows))
}

pub fn save_table(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_table(table, &mut out)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_table<W: Write>(table: &Table, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(table.schema().names())?;
    for row in table.rows() {
        wtr.write_record(row.values())?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(table: &Table) -> Table {
        let mut buf = Vec::new();
        write_table(table, &mut buf).unwrap();
        read_table(buf.as_slice(), true).unwrap()
    }

    #[test]
    fn reads_header_and_rows() {
        let t = read_table("a,b\n1,2\n3,4\n".as_bytes(), true).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.schema().names(), ["a", "b"]);
        assert_eq!(t.rows()[1].values(), ["3", "4"]);
    }

    #[test]
    fn headerless_gets_synthesized_names() {
        let t = read_table("1,2,3\n4,5,6\n".as_bytes(), false).unwrap();
        assert_eq!(t.schema().names(), ["col0", "col1", "col2"]);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn ragged_row_names_its_index() {
        let err = read_table("a,b\n1,2\n3\n5,6\n".as_bytes(), true).unwrap_err();
        assert!(matches!(
            err,
            Error::RaggedRow {
                row: 1,
                expected: 2,
                found: 1
            }
        ));
    }

    #[test]
    fn empty_table_writes_header_only() {
        let t = Table::empty(Schema::new(["a", "b"]).unwrap());
        let mut buf = Vec::new();
        write_table(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n");
        assert_eq!(roundtrip(&t), t);
    }

    #[test]
    fn awkward_values_roundtrip() {
        let schema = Schema::new(["a", "b"]).unwrap();
        let rows = vec![
            Tuple::new(["x,y", " padded "]),
            Tuple::new(["quote \"q\"", ""]),
            Tuple::new(["multi\nline", "ünïcode"]),
        ];
        let t = Table::new(schema, rows).unwrap();
        assert_eq!(roundtrip(&t), t);
    }

    #[test]
    fn single_empty_column_roundtrips() {
        let schema = Schema::new(["only"]).unwrap();
        let t = Table::new(schema, vec![Tuple::new([""]), Tuple::new(["v"])]).unwrap();
        assert_eq!(roundtrip(&t), t);
    }

    #[test]
    fn file_roundtrip_and_line_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = crate::sample::synthetic_table(10_000, 3);
        save_table(&t, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 10_001);
        assert_eq!(load_table(&path, true).unwrap(), t);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_table("/nonexistent/nope.csv", true),
            Err(Error::Io { .. })
        ));
    }
}
