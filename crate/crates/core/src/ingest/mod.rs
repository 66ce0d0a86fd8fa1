//! Streaming readers that turn operator-supplied text files into validated
//! domain records.
//!
//! Every reader counts the rows it rejects; nothing is dropped silently.
//! With `strict` set the first rejection ends the stream with
//! [`Error::StrictRejection`].

mod mapping;
mod source;
mod stats;

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{
    normalize_cep, AddressTally, Cep, CepError, CodeError, Coord, EstablishmentRecord, FaceCode,
    FaceGeometry, Geocode, SectorMappingConfig, SpeciesCategory, FIRST_YEAR_WITH_CEP,
};
use crate::Error;

pub use mapping::{ColumnMapping, Encoding, FieldSpec, MappingSet, RecordKind, SourceKind};
pub use source::{RawRow, RowSource};
pub use stats::IngestStats;

/// Why a row was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RowError {
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("malformed geometry: {0}")]
    MalformedGeometry(String),
    #[error("duplicate face code {0}")]
    DuplicateFaceCode(FaceCode),
    #[error(transparent)]
    BadCode(#[from] CodeError),
    #[error("malformed CEP: {0}")]
    MalformedCep(#[from] CepError),
    #[error("unknown species {0:?}")]
    UnknownSpecies(String),
    #[error("negative job count {0}")]
    NegativeJobs(i64),
    #[error("malformed {field}: {value:?}")]
    BadNumber { field: &'static str, value: String },
    #[error("year {0} predates {FIRST_YEAR_WITH_CEP}")]
    BadYear(u16),
}

impl RowError {
    /// Stable short label used for the per-reason counters.
    pub fn kind(&self) -> &'static str {
        match self {
            RowError::MissingField(_) => "MissingField",
            RowError::MalformedGeometry(_) => "MalformedGeometry",
            RowError::DuplicateFaceCode(_) => "DuplicateFaceCode",
            RowError::BadCode(_) => "BadCode",
            RowError::MalformedCep(_) => "MalformedCep",
            RowError::UnknownSpecies(_) => "UnknownSpecies",
            RowError::NegativeJobs(_) => "NegativeJobs",
            RowError::BadNumber { .. } => "BadNumber",
            RowError::BadYear(_) => "BadYear",
        }
    }
}

/// Record-type specific half of a reader.
pub trait RowParser {
    type Item;
    const KIND: RecordKind;
    const FIELDS: &'static [&'static str];

    fn parse(&mut self, row: &RawRow) -> Result<Self::Item, RowError>;
}

fn required<'a>(row: &'a RawRow, i: usize, name: &'static str) -> Result<&'a str, RowError> {
    row.get(i).ok_or(RowError::MissingField(name))
}

/// A face row from the geometry file.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceRecord {
    pub line: u64,
    pub face_code: FaceCode,
    pub municipality: Geocode,
    pub geometry: FaceGeometry,
}

/// One address occurrence from the species file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressRecord {
    pub face_code: FaceCode,
    pub cep: Cep,
    pub species: SpeciesCategory,
}

pub struct FaceParser {
    from_prefix: bool,
    seen: Option<HashSet<FaceCode>>,
}

impl FaceParser {
    /// `dedup` keeps a set of seen face codes and rejects repeats. The
    /// pipeline turns it off and deduplicates per partition instead.
    pub fn new(mapping: &ColumnMapping, dedup: bool) -> FaceParser {
        FaceParser {
            from_prefix: mapping.municipality_from_face_code,
            seen: dedup.then(HashSet::new),
        }
    }
}

/// Parses a WKT `POINT`/`LINESTRING`.
pub fn parse_wkt(text: &str) -> Result<FaceGeometry, RowError> {
    let malformed = |m: &str| RowError::MalformedGeometry(m.to_string());
    let geom = wkt::Wkt::<f64>::from_str(text).map_err(malformed)?;
    let coord = |c: &wkt::types::Coord<f64>| Coord::new(c.x, c.y);
    match geom {
        wkt::Wkt::Point(p) => {
            let c = p.coord().ok_or_else(|| malformed("empty POINT"))?;
            FaceGeometry::new_point(coord(c)).map_err(|e| malformed(&e.to_string()))
        }
        wkt::Wkt::LineString(ls) => FaceGeometry::new_line(ls.coords().iter().map(coord).collect())
            .map_err(|e| malformed(&e.to_string())),
        _ => Err(malformed("only POINT and LINESTRING are supported")),
    }
}

/// Parses a `"lon lat;lon lat;..."` vertex list. One vertex yields a point.
pub fn parse_vertex_list(text: &str) -> Result<FaceGeometry, RowError> {
    let vertices = text
        .split(';')
        .map(|pair| {
            let mut it = pair.split_whitespace().map(f64::from_str);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(lon)), Some(Ok(lat)), None) => Ok(Coord::new(lon, lat)),
                _ => Err(RowError::MalformedGeometry(format!("bad vertex {pair:?}"))),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let result = match vertices.as_slice() {
        [single] => FaceGeometry::new_point(*single),
        _ => FaceGeometry::new_line(vertices),
    };
    result.map_err(|e| RowError::MalformedGeometry(e.to_string()))
}

impl RowParser for FaceParser {
    type Item = FaceRecord;
    const KIND: RecordKind = RecordKind::Faces;
    const FIELDS: &'static [&'static str] = &["face_code", "municipality", "wkt", "vertices"];

    fn parse(&mut self, row: &RawRow) -> Result<FaceRecord, RowError> {
        let face_code = FaceCode::new(required(row, 0, "face_code")?)?;
        let municipality = if self.from_prefix {
            face_code.municipality_prefix()
        } else {
            Geocode::new(required(row, 1, "municipality")?)?
        };
        let geometry = match (row.get(2), row.get(3)) {
            (Some(w), _) => parse_wkt(w)?,
            (None, Some(v)) => parse_vertex_list(v)?,
            (None, None) => return Err(RowError::MissingField("geometry")),
        };
        if let Some(seen) = &mut self.seen {
            if !seen.insert(face_code.clone()) {
                return Err(RowError::DuplicateFaceCode(face_code));
            }
        }
        Ok(FaceRecord {
            line: row.line,
            face_code,
            municipality,
            geometry,
        })
    }
}

pub struct SpeciesParser;

impl RowParser for SpeciesParser {
    type Item = AddressRecord;
    const KIND: RecordKind = RecordKind::Species;
    const FIELDS: &'static [&'static str] = &["face_code", "cep", "species"];

    fn parse(&mut self, row: &RawRow) -> Result<AddressRecord, RowError> {
        let face_code = FaceCode::new(required(row, 0, "face_code")?)?;
        let cep = normalize_cep(required(row, 1, "cep")?)?;
        let raw = required(row, 2, "species")?;
        let species = SpeciesCategory::from_str(raw)
            .map_err(|_| RowError::UnknownSpecies(raw.to_string()))?;
        Ok(AddressRecord {
            face_code,
            cep,
            species,
        })
    }
}

pub struct EstablishmentParser {
    sectors: SectorMappingConfig,
}

impl EstablishmentParser {
    pub fn new(sectors: SectorMappingConfig) -> EstablishmentParser {
        EstablishmentParser { sectors }
    }
}

impl RowParser for EstablishmentParser {
    type Item = EstablishmentRecord;
    const KIND: RecordKind = RecordKind::Establishments;
    const FIELDS: &'static [&'static str] = &[
        "establishment_id",
        "municipality",
        "cep",
        "activity",
        "jobs",
        "year",
    ];

    fn parse(&mut self, row: &RawRow) -> Result<EstablishmentRecord, RowError> {
        let establishment_id = required(row, 0, "establishment_id")?.to_string();
        let municipality = Geocode::new(required(row, 1, "municipality")?)?;
        let cep = normalize_cep(required(row, 2, "cep")?)?;
        let sector = self.sectors.sector_of(required(row, 3, "activity")?);
        let raw_jobs = required(row, 4, "jobs")?;
        let jobs: i64 = raw_jobs.parse().map_err(|_| RowError::BadNumber {
            field: "jobs",
            value: raw_jobs.to_string(),
        })?;
        if jobs < 0 {
            return Err(RowError::NegativeJobs(jobs));
        }
        let raw_year = required(row, 5, "year")?;
        let year: u16 = raw_year.parse().map_err(|_| RowError::BadNumber {
            field: "year",
            value: raw_year.to_string(),
        })?;
        if year < FIRST_YEAR_WITH_CEP {
            return Err(RowError::BadYear(year));
        }
        Ok(EstablishmentRecord {
            establishment_id,
            municipality,
            cep,
            sector,
            jobs: jobs as u64,
            year,
        })
    }
}

/// Validating stream over one input file.
pub struct IngestReader<R: Read, P: RowParser> {
    source: RowSource<R>,
    parser: P,
    stats: IngestStats,
    strict: bool,
    done: bool,
}

impl<R: Read, P: RowParser> IngestReader<R, P> {
    pub fn new(source: R, mapping: &ColumnMapping, parser: P) -> Result<Self, Error> {
        mapping.validate(P::KIND)?;
        Ok(IngestReader {
            source: RowSource::new(source, mapping, P::FIELDS)?,
            parser,
            stats: IngestStats::default(),
            strict: false,
            done: false,
        })
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn into_stats(self) -> IngestStats {
        self.stats
    }
}

impl<R: Read, P: RowParser> Iterator for IngestReader<R, P> {
    type Item = Result<P::Item, Error>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let row = match self.source.next_row()? {
                Ok(row) => row,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            match self.parser.parse(&row) {
                Ok(item) => {
                    self.stats.accept();
                    return Some(Ok(item));
                }
                Err(reason) => {
                    self.stats.reject(row.line, &reason);
                    if self.strict {
                        self.done = true;
                        return Some(Err(Error::StrictRejection {
                            input: P::KIND.name(),
                            line: row.line,
                            reason: reason.to_string(),
                        }));
                    }
                }
            }
        }
    }
}

pub type FaceReader<R> = IngestReader<R, FaceParser>;
pub type SpeciesReader<R> = IngestReader<R, SpeciesParser>;
pub type EstablishmentReader<R> = IngestReader<R, EstablishmentParser>;

pub fn read_faces<R: Read>(source: R, mapping: &ColumnMapping) -> Result<FaceReader<R>, Error> {
    IngestReader::new(source, mapping, FaceParser::new(mapping, true))
}

pub fn read_address_species<R: Read>(
    source: R,
    mapping: &ColumnMapping,
) -> Result<SpeciesReader<R>, Error> {
    IngestReader::new(source, mapping, SpeciesParser)
}

pub fn read_establishments<R: Read>(
    source: R,
    mapping: &ColumnMapping,
    sector_config: &SectorMappingConfig,
) -> Result<EstablishmentReader<R>, Error> {
    IngestReader::new(
        source,
        mapping,
        EstablishmentParser::new(sector_config.clone()),
    )
}

/// Per-face address tallies. Shards built from disjoint parts of a stream
/// combine with [`merge_tallies`].
pub fn build_tallies<I>(addresses: I) -> HashMap<FaceCode, AddressTally>
where
    I: IntoIterator<Item = AddressRecord>,
{
    let mut out: HashMap<FaceCode, AddressTally> = HashMap::new();
    for a in addresses {
        out.entry(a.face_code).or_default().add(a.cep, a.species, 1);
    }
    out
}

pub fn merge_tallies(
    mut into: HashMap<FaceCode, AddressTally>,
    other: HashMap<FaceCode, AddressTally>,
) -> HashMap<FaceCode, AddressTally> {
    for (face, tally) in other {
        into.entry(face).or_default().merge(&tally);
    }
    into
}

#[cfg(test)]
mod tests;
