//! Temporary partition files.
//!
//! Inputs are spilled into hash buckets so that only one bucket at a time has
//! to be held in memory. Face and species rows are bucketed by face code for
//! the join; joined faces and establishments are bucketed by municipality for
//! allocation. Fields are digit strings, so tab-separated lines suffice, except
//! for establishment ids, which go through a quoting CSV writer.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::geometry::PointSource;
use crate::model::{
    normalize_cep, AddressTally, Cep, Coord, EstablishmentRecord, FaceCode, Geocode, SectorClass,
    SpeciesCategory,
};
use crate::Error;

pub(crate) const IO_BUFFER: usize = 16 << 10;
pub(crate) const MAX_BUCKETS: usize = 1024;

/// FNV-1a; stable across platforms and releases.
pub(crate) fn bucket_of(key: &str, buckets: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h % buckets as u64) as usize
}

/// Number of buckets needed to keep each near `bucket_bytes` of input.
pub(crate) fn bucket_count(total_bytes: u64, bucket_bytes: u64) -> usize {
    (total_bytes.div_ceil(bucket_bytes) as usize).clamp(1, MAX_BUCKETS)
}

/// A set of bucket files under one directory.
pub(crate) struct Buckets {
    paths: Vec<PathBuf>,
}

impl Buckets {
    pub fn new(dir: &Path, stem: &str, count: usize) -> Buckets {
        Buckets {
            paths: (0..count)
                .map(|i| dir.join(format!("{stem}-{i:04}")))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn path(&self, i: usize) -> &Path {
        &self.paths[i]
    }

    pub fn writers(&self) -> io::Result<Vec<BufWriter<File>>> {
        self.paths
            .iter()
            .map(|p| File::create(p).map(|f| BufWriter::with_capacity(IO_BUFFER, f)))
            .collect()
    }

    /// Lines of bucket `i`; a bucket never written reads as empty.
    pub fn lines(&self, i: usize) -> io::Result<Box<dyn Iterator<Item = io::Result<String>>>> {
        match File::open(&self.paths[i]) {
            Ok(f) => Ok(Box::new(BufReader::with_capacity(IO_BUFFER, f).lines())),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Box::new(std::iter::empty())),
            Err(e) => Err(e),
        }
    }

    pub fn remove(&self, i: usize) {
        let _ = std::fs::remove_file(&self.paths[i]);
    }
}

fn corrupt(what: &str, line: &str) -> Error {
    Error::Format(format!("corrupt {what} spill line {line:?}"))
}

fn source_tag(s: PointSource) -> char {
    match s {
        PointSource::Midpoint => 'M',
        PointSource::SinglePoint => 'S',
        PointSource::FirstVertex => 'F',
    }
}

fn parse_source(tag: &str) -> Option<PointSource> {
    match tag {
        "M" => Some(PointSource::Midpoint),
        "S" => Some(PointSource::SinglePoint),
        "F" => Some(PointSource::FirstVertex),
        _ => None,
    }
}

/// A face reduced to what allocation and export need.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SpilledFace {
    pub line: u64,
    pub face_code: FaceCode,
    pub municipality: Geocode,
    pub point: Coord,
    pub source: PointSource,
}

// Coordinates travel as raw bits so the spill round-trip is exact.
pub(crate) fn write_face<W: Write>(w: &mut W, f: &SpilledFace) -> io::Result<()> {
    writeln!(
        w,
        "{}\t{}\t{}\t{:x}\t{:x}\t{}",
        f.line,
        f.face_code,
        f.municipality,
        f.point.lon.to_bits(),
        f.point.lat.to_bits(),
        source_tag(f.source)
    )
}

pub(crate) fn read_face(line: &str) -> Result<SpilledFace, Error> {
    let bad = || corrupt("face", line);
    let mut it = line.split('\t');
    let mut next = || it.next().ok_or_else(bad);
    let line_no = next()?.parse().map_err(|_| bad())?;
    let face_code = FaceCode::new(next()?).map_err(|_| bad())?;
    let municipality = Geocode::new(next()?).map_err(|_| bad())?;
    let lon = f64::from_bits(u64::from_str_radix(next()?, 16).map_err(|_| bad())?);
    let lat = f64::from_bits(u64::from_str_radix(next()?, 16).map_err(|_| bad())?);
    let source = parse_source(next()?).ok_or_else(bad)?;
    Ok(SpilledFace {
        line: line_no,
        face_code,
        municipality,
        point: Coord::new(lon, lat),
        source,
    })
}

pub(crate) fn write_address<W: Write>(
    w: &mut W,
    face_code: &FaceCode,
    cep: Cep,
    species: SpeciesCategory,
) -> io::Result<()> {
    writeln!(w, "{}\t{}\t{}", face_code, cep, species.code())
}

pub(crate) fn read_address(line: &str) -> Result<(&str, Cep, SpeciesCategory), Error> {
    let bad = || corrupt("species", line);
    let mut it = line.split('\t');
    let code = it.next().ok_or_else(bad)?;
    let cep = normalize_cep(it.next().ok_or_else(bad)?).map_err(|_| bad())?;
    let species = it
        .next()
        .and_then(|s| s.parse().ok())
        .and_then(SpeciesCategory::from_code)
        .ok_or_else(bad)?;
    Ok((code, cep, species))
}

/// A face joined with its address tally.
pub(crate) fn write_joined<W: Write>(
    w: &mut W,
    f: &SpilledFace,
    tally: &AddressTally,
) -> io::Result<()> {
    write!(
        w,
        "{}\t{}\t{:x}\t{:x}\t{}\t",
        f.face_code,
        f.municipality,
        f.point.lon.to_bits(),
        f.point.lat.to_bits(),
        source_tag(f.source)
    )?;
    for (i, (cep, species, n)) in tally.iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        write!(w, "{}:{}:{}", cep, species.code(), n)?;
    }
    w.write_all(b"\n")
}

pub(crate) fn read_joined(line: &str) -> Result<(SpilledFace, AddressTally), Error> {
    let bad = || corrupt("joined face", line);
    let mut it = line.split('\t');
    let mut next = || it.next().ok_or_else(bad);
    let face_code = FaceCode::new(next()?).map_err(|_| bad())?;
    let municipality = Geocode::new(next()?).map_err(|_| bad())?;
    let lon = f64::from_bits(u64::from_str_radix(next()?, 16).map_err(|_| bad())?);
    let lat = f64::from_bits(u64::from_str_radix(next()?, 16).map_err(|_| bad())?);
    let source = parse_source(next()?).ok_or_else(bad)?;
    let mut tally = AddressTally::new();
    // an empty tally may lose its trailing tab to whitespace trimming
    for entry in it.next().unwrap_or("").split(',').filter(|s| !s.is_empty()) {
        let mut parts = entry.split(':');
        let cep = parts
            .next()
            .and_then(|s| normalize_cep(s).ok())
            .ok_or_else(bad)?;
        let species = parts
            .next()
            .and_then(|s| s.parse().ok())
            .and_then(SpeciesCategory::from_code)
            .ok_or_else(bad)?;
        let n = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        tally.add(cep, species, n);
    }
    let face = SpilledFace {
        line: 0,
        face_code,
        municipality,
        point: Coord::new(lon, lat),
        source,
    };
    Ok((face, tally))
}

pub(crate) fn establishment_writers(buckets: &Buckets) -> io::Result<Vec<csv::Writer<File>>> {
    (0..buckets.len())
        .map(|i| {
            let f = File::create(buckets.path(i))?;
            Ok(csv::WriterBuilder::new()
                .delimiter(b'\t')
                .has_headers(false)
                .buffer_capacity(IO_BUFFER)
                .from_writer(f))
        })
        .collect()
}

pub(crate) fn write_establishment(
    w: &mut csv::Writer<File>,
    e: &EstablishmentRecord,
) -> Result<(), Error> {
    w.write_record([
        e.establishment_id.as_str(),
        e.municipality.as_str(),
        e.cep.as_str(),
        &e.sector.index().to_string(),
        &e.jobs.to_string(),
        &e.year.to_string(),
    ])?;
    Ok(())
}

/// Reads back one establishment bucket.
pub(crate) fn read_establishments(path: &Path) -> Result<Vec<EstablishmentRecord>, Error> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .buffer_capacity(IO_BUFFER)
        .from_reader(file);
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record?;
        let bad = || Error::Format(format!("corrupt establishment spill record {r:?}"));
        let field = |i: usize| r.get(i).ok_or_else(bad);
        out.push(EstablishmentRecord {
            establishment_id: field(0)?.to_string(),
            municipality: Geocode::new(field(1)?).map_err(|_| bad())?,
            cep: normalize_cep(field(2)?).map_err(|_| bad())?,
            sector: field(3)?
                .parse::<usize>()
                .ok()
                .and_then(|i| SectorClass::ALL.get(i).copied())
                .ok_or_else(bad)?,
            jobs: field(4)?.parse().map_err(|_| bad())?,
            year: field(5)?.parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
