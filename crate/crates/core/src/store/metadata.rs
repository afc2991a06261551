use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::fakegen::FakeTupleSet;
use crate::store::{Schema, Tuple};
use crate::watermark::SchemeParams;

/// The owner's secret state: scheme parameters, the user codebook and the
/// fake tuples. `fake_tuples` is `None` between `assign` and `genfake`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatermarkMetadata {
    pub params: SchemeParams,
    pub codebook: Codebook,
    pub fake_tuples: Option<FakeTupleSet>,
    pub key_column: Option<usize>,
}

impl WatermarkMetadata {
    pub fn new(
        params: SchemeParams,
        codebook: Codebook,
        fake_tuples: Option<FakeTupleSet>,
        key_column: Option<usize>,
    ) -> Result<Self> {
        let meta = WatermarkMetadata {
            params,
            codebook,
            fake_tuples,
            key_column,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.codebook.len() != self.params.n_u {
            return Err(Error::validation(format!(
                "codebook has {} users, params say n_u = {}",
                self.codebook.len(),
                self.params.n_u
            )));
        }
        if self.codebook.watermark_length() != self.params.watermark_length {
            return Err(Error::validation(format!(
                "codebook watermarks have {} bits, params say L = {}",
                self.codebook.watermark_length(),
                self.params.watermark_length
            )));
        }
        if let Some(tf) = &self.fake_tuples {
            if tf.group_count() != self.params.watermark_length {
                return Err(Error::validation(format!(
                    "{} fake tuple groups, params say L = {}",
                    tf.group_count(),
                    self.params.watermark_length
                )));
            }
            if tf.group_size() != self.params.per_group {
                return Err(Error::validation(format!(
                    "fake tuple groups have {} tuples, params say x = {}",
                    tf.group_size(),
                    self.params.per_group
                )));
            }
            if let Some(k) = self.key_column {
                if tf.match_subset().contains(&k) {
                    return Err(Error::validation("key column is part of the match subset"));
                }
            }
        }
        Ok(())
    }

    /// The fake tuples, or a validation error if none were generated yet.
    pub fn fakes(&self) -> Result<&FakeTupleSet> {
        self.fake_tuples
            .as_ref()
            .ok_or_else(|| Error::validation("metadata has no fake tuples; run genfake first"))
    }
}

#[derive(Serialize, Deserialize)]
struct MetadataFile {
    params: SchemeParams,
    schema: Vec<String>,
    match_subset: Vec<usize>,
    #[serde(default)]
    key_column: Option<usize>,
    codebook: Codebook,
    fake_tuples: Vec<Vec<Tuple>>,
}

impl From<&WatermarkMetadata> for MetadataFile {
    fn from(meta: &WatermarkMetadata) -> Self {
        let (schema, match_subset, fake_tuples) = match &meta.fake_tuples {
            Some(tf) => (
                tf.schema().names().to_vec(),
                tf.match_subset().to_vec(),
                tf.groups().to_vec(),
            ),
            None => (Vec::new(), Vec::new(), Vec::new()),
        };
        MetadataFile {
            params: meta.params.clone(),
            schema,
            match_subset,
            key_column: meta.key_column,
            codebook: meta.codebook.clone(),
            fake_tuples,
        }
    }
}

impl TryFrom<MetadataFile> for WatermarkMetadata {
    type Error = Error;

    fn try_from(file: MetadataFile) -> Result<Self> {
        let fake_tuples = if file.fake_tuples.is_empty() {
            None
        } else {
            let schema = Schema::new(file.schema)?;
            Some(FakeTupleSet::new(schema, file.match_subset, file.fake_tuples)?)
        };
        WatermarkMetadata::new(file.params, file.codebook, fake_tuples, file.key_column)
    }
}

impl Serialize for WatermarkMetadata {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        MetadataFile::from(self).serialize(ser)
    }
}

impl<'de> Deserialize<'de> for WatermarkMetadata {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let file = MetadataFile::deserialize(de)?;
        WatermarkMetadata::try_from(file).map_err(serde::de::Error::custom)
    }
}

pub fn save_metadata(meta: &WatermarkMetadata, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_metadata(path: impl AsRef<Path>) -> Result<WatermarkMetadata> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: MetadataFile = serde_json::from_str(&text)?;
    WatermarkMetadata::try_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{assign, default_user_ids};
    use crate::fakegen::{generate, GeneratorSpec};
    use crate::sample::synthetic_table;

    fn meta() -> WatermarkMetadata {
        let params = SchemeParams::new(50, 5, 42).unwrap();
        let table = synthetic_table(400, 8);
        let spec = GeneratorSpec::mimic(1).with_key_column(Some(0));
        let tf = generate(&table, params.watermark_length, params.per_group, &spec).unwrap();
        let cb = assign(&default_user_ids(50), params.watermark_length).unwrap();
        WatermarkMetadata::new(params, cb, Some(tf), Some(0)).unwrap()
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        let m = meta();
        save_metadata(&m, &path).unwrap();
        assert_eq!(load_metadata(&path).unwrap(), m);
    }

    #[test]
    fn json_has_expected_layout() {
        let v = serde_json::to_value(meta()).unwrap();
        for field in ["params", "codebook", "fake_tuples", "schema", "match_subset"] {
            assert!(v.get(field).is_some(), "missing {field}");
        }
        let groups = v["fake_tuples"].as_array().unwrap();
        assert_eq!(groups.len(), 6);
        assert!(groups.iter().all(|g| g.as_array().unwrap().len() == 5));
        assert_eq!(v["params"]["L"], 6);
        assert_eq!(v["codebook"][1]["watermark"], "000001");
    }

    #[test]
    fn tampered_group_count_is_rejected() {
        let mut v = serde_json::to_value(meta()).unwrap();
        v["fake_tuples"].as_array_mut().unwrap().pop();
        let err = serde_json::from_value::<WatermarkMetadata>(v).unwrap_err();
        assert!(err.to_string().contains("fake tuple groups"), "{err}");
    }

    #[test]
    fn tampered_codebook_length_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        let mut v = serde_json::to_value(meta()).unwrap();
        v["codebook"].as_array_mut().unwrap().pop();
        fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(load_metadata(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_json_is_json_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        fs::write(&path, "{ nope").unwrap();
        assert!(matches!(load_metadata(&path), Err(Error::Json(_))));
    }

    #[test]
    fn metadata_without_fakes_roundtrips() {
        let params = SchemeParams::new(3, 1, 0).unwrap();
        let cb = assign(&["a", "b", "c"], 2).unwrap();
        let m = WatermarkMetadata::new(params, cb, None, None).unwrap();
        let back: WatermarkMetadata =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(back.fakes().is_err());
    }
}
