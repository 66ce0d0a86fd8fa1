use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    #[default]
    Delimited,
    FixedWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Encoding {
    #[default]
    #[serde(rename = "utf-8", alias = "utf8", alias = "UTF-8")]
    Utf8,
    #[serde(
        rename = "latin-1",
        alias = "latin1",
        alias = "iso-8859-1",
        alias = "Latin-1"
    )]
    Latin1,
}

/// Where a logical field lives in a source row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    /// Zero-based column index (delimited).
    Column(usize),
    /// Header name (delimited, header required).
    Name(String),
    /// Half-open byte range `[start, end)` (fixed width).
    Range([usize; 2]),
}

/// Declarative layout of one input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    #[serde(default)]
    pub kind: SourceKind,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_header")]
    pub header: bool,
    #[serde(default)]
    pub encoding: Encoding,
    /// Derive the municipality geocode from the first seven digits of the
    /// face code instead of reading a column (faces only).
    #[serde(default)]
    pub municipality_from_face_code: bool,
    pub fields: BTreeMap<String, FieldSpec>,
}

fn default_delimiter() -> char {
    ','
}

fn default_header() -> bool {
    true
}

/// Which reader a mapping feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Faces,
    Species,
    Establishments,
}

impl RecordKind {
    pub fn name(self) -> &'static str {
        match self {
            RecordKind::Faces => "faces",
            RecordKind::Species => "species",
            RecordKind::Establishments => "establishments",
        }
    }

    fn required(self, mapping: &ColumnMapping) -> Vec<&'static str> {
        match self {
            RecordKind::Faces if mapping.municipality_from_face_code => vec!["face_code"],
            RecordKind::Faces => vec!["face_code", "municipality"],
            RecordKind::Species => vec!["face_code", "cep", "species"],
            RecordKind::Establishments => {
                vec![
                    "establishment_id",
                    "municipality",
                    "cep",
                    "activity",
                    "jobs",
                    "year",
                ]
            }
        }
    }

    fn optional(self) -> &'static [&'static str] {
        match self {
            RecordKind::Faces => &["wkt", "vertices", "municipality"],
            _ => &[],
        }
    }
}

impl ColumnMapping {
    pub fn delimited<I, K>(fields: I) -> ColumnMapping
    where
        I: IntoIterator<Item = (K, FieldSpec)>,
        K: Into<String>,
    {
        ColumnMapping {
            kind: SourceKind::Delimited,
            delimiter: ',',
            header: true,
            encoding: Encoding::Utf8,
            municipality_from_face_code: false,
            fields: fields.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    /// Checks that every required field is mapped exactly once and that the
    /// field specs fit the source kind.
    pub fn validate(&self, kind: RecordKind) -> Result<(), Error> {
        let bad = |msg: String| Error::Config(format!("{} mapping: {msg}", kind.name()));
        for name in kind.required(self) {
            if !self.fields.contains_key(name) {
                return Err(bad(format!("required field {name:?} is not mapped")));
            }
        }
        let required = kind.required(self);
        for name in self.fields.keys() {
            if !required.contains(&name.as_str()) && !kind.optional().contains(&name.as_str()) {
                return Err(bad(format!("unknown field {name:?}")));
            }
        }
        if kind == RecordKind::Faces {
            let geometry = ["wkt", "vertices"]
                .iter()
                .filter(|f| self.fields.contains_key(**f))
                .count();
            if geometry != 1 {
                return Err(bad(
                    "exactly one of \"wkt\" or \"vertices\" must be mapped".into()
                ));
            }
            if self.municipality_from_face_code && self.fields.contains_key("municipality") {
                return Err(bad(
                    "municipality is both mapped and derived from the face code".into(),
                ));
            }
        } else if self.municipality_from_face_code {
            return Err(bad(
                "municipality_from_face_code only applies to faces".into()
            ));
        }
        match self.kind {
            SourceKind::Delimited => {
                if !self.delimiter.is_ascii() || self.delimiter == '"' || self.delimiter == '\n' {
                    return Err(bad(format!("unsupported delimiter {:?}", self.delimiter)));
                }
                for (name, spec) in &self.fields {
                    match spec {
                        FieldSpec::Range(_) => {
                            return Err(bad(format!("{name}: byte ranges need kind = fixed-width")))
                        }
                        FieldSpec::Name(_) if !self.header => {
                            return Err(bad(format!("{name}: column names need header = true")))
                        }
                        _ => {}
                    }
                }
            }
            SourceKind::FixedWidth => {
                let mut ranges = Vec::new();
                for (name, spec) in &self.fields {
                    match spec {
                        FieldSpec::Range([s, e]) if s < e => ranges.push((*s, *e, name)),
                        FieldSpec::Range(_) => {
                            return Err(bad(format!("{name}: empty byte range")))
                        }
                        _ => {
                            return Err(bad(format!(
                                "{name}: fixed-width fields need a byte range"
                            )))
                        }
                    }
                }
                ranges.sort();
                for w in ranges.windows(2) {
                    if w[1].0 < w[0].1 {
                        return Err(bad(format!(
                            "byte ranges of {} and {} overlap",
                            w[0].2, w[1].2
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The three input layouts of a run, as read from one mapping file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSet {
    pub faces: ColumnMapping,
    pub species: ColumnMapping,
    pub establishments: ColumnMapping,
}

impl MappingSet {
    pub fn from_toml(text: &str) -> Result<MappingSet, Error> {
        let set: MappingSet =
            toml::from_str(text).map_err(|e| Error::Config(format!("mapping file: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<MappingSet, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
        MappingSet::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.faces.validate(RecordKind::Faces)?;
        self.species.validate(RecordKind::Species)?;
        self.establishments.validate(RecordKind::Establishments)
    }

    /// Layout written by the synthetic generator: comma-separated with a
    /// header row and named columns.
    pub fn normalized() -> MappingSet {
        let named = |names: &[&str]| {
            ColumnMapping::delimited(
                names
                    .iter()
                    .map(|n| (*n, FieldSpec::Name((*n).to_string()))),
            )
        };
        MappingSet {
            faces: named(&["face_code", "municipality", "wkt"]),
            species: named(&["face_code", "cep", "species"]),
            establishments: named(&[
                "establishment_id",
                "municipality",
                "cep",
                "activity",
                "jobs",
                "year",
            ]),
        }
    }
}
