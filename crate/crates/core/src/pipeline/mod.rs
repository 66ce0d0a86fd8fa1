//! End-to-end runs: ingest, join, allocate and export.
//!
//! Memory is bounded by spilling the inputs into hash buckets in a temporary
//! directory under the output directory:
//!
//! 1. faces (with their representative point) and species rows go to buckets
//!    keyed by face code; establishments that pass the filters go to buckets
//!    keyed by municipality;
//! 2. each face bucket is deduplicated and joined with its address tallies,
//!    and the joined faces are re-bucketed by municipality;
//! 3. each municipality bucket is allocated one municipality at a time and
//!    its rows written, sorted, to a part file;
//! 4. the part files are merged into the final outputs.
//!
//! Steps 2 and 3 run on a pool of `parallelism` threads. Nothing written
//! depends on scheduling: every output is sorted and every report list is
//! normalized before it is rendered.

pub mod config;
mod spill;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

pub use config::{OutputLayout, RunConfig, RunSettings, DEFAULT_BUCKET_BYTES};

use crate::allocator::{allocate_partition, build_index};
use crate::export::{self, CsvWriter, FormattedRow, GeoJsonWriter};
use crate::geometry::{representative_point, validate_coords, PointSource, Verdict};
use crate::ingest::{
    self, FaceParser, IngestReader, IngestStats, MappingSet, RecordKind, RowError,
};
use crate::model::{
    AddressTally, AllocationRule, EstablishmentRecord, FaceCode, FaceGeometry, Geocode, JobPoint,
    RunReport, SectorMappingConfig, StreetFace, UnallocatedEntry,
};
use crate::Error;
use spill::{Buckets, SpilledFace, IO_BUFFER};

pub const CSV_FILE: &str = "jobs.csv";
pub const GEOJSON_FILE: &str = "jobs.geojson";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

fn open(path: &Path) -> Result<File, Error> {
    File::open(path).map_err(|e| Error::input(path, e))
}

fn file_len(path: &Path) -> Result<u64, Error> {
    fs::metadata(path)
        .map(|m| m.len())
        .map_err(|e| Error::input(path, e))
}

fn flush_all<W: Write>(writers: Vec<W>) -> Result<(), Error> {
    for mut w in writers {
        w.flush()?;
    }
    Ok(())
}

/// Runs the whole pipeline and writes the outputs under `config.out`.
pub fn run(config: &RunConfig) -> Result<RunReport, Error> {
    let started = Instant::now();
    fs::create_dir_all(&config.out)?;
    let tmp = tempfile::Builder::new()
        .prefix(".facejobs-")
        .tempdir_in(&config.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let faces_len = file_len(&config.faces)?;
    let join_buckets =
        spill::bucket_count(faces_len + file_len(&config.species)?, config.bucket_bytes);
    let muni_buckets = spill::bucket_count(
        faces_len + file_len(&config.establishments)?,
        config.bucket_bytes,
    );
    let face_spill = Buckets::new(tmp.path(), "faces", join_buckets);
    let species_spill = Buckets::new(tmp.path(), "species", join_buckets);
    let est_spill = Buckets::new(tmp.path(), "establishments", muni_buckets);
    let joined_spill = Buckets::new(tmp.path(), "joined", muni_buckets);
    let parts = Buckets::new(tmp.path(), "part", muni_buckets);

    let mut report = RunReport::default();
    let mut face_stats = spill_faces(config, &face_spill)?;
    let species_stats = spill_species(config, &species_spill)?;
    let (est_stats, filtered) = spill_establishments(config, &est_spill)?;
    report.establishments_filtered = filtered;
    info!(
        "spilled inputs into {join_buckets} join and {muni_buckets} municipality buckets in {:.1?}",
        started.elapsed()
    );

    let writers: Vec<_> = joined_spill
        .writers()?
        .into_iter()
        .map(Mutex::new)
        .collect();
    let joins = pool.install(|| {
        (0..join_buckets)
            .into_par_iter()
            .map(|i| join_bucket(config, i, &face_spill, &species_spill, &writers))
            .collect::<Vec<_>>()
    });
    flush_all(
        writers
            .into_iter()
            .map(|w| w.into_inner().expect("writer lock"))
            .collect(),
    )?;
    let mut duplicates = Vec::new();
    for join in joins {
        let join = join?;
        duplicates.extend(join.duplicates);
        report.species_faces_without_geometry += join.species_faces_without_geometry;
        report.species_rows_without_geometry += join.species_rows_without_geometry;
    }
    duplicates.sort();
    if config.strict {
        if let Some((line, code)) = duplicates.first() {
            return Err(Error::StrictRejection {
                input: RecordKind::Faces.name(),
                line: *line,
                reason: RowError::DuplicateFaceCode(code.clone()).to_string(),
            });
        }
    }
    for (line, code) in duplicates {
        face_stats.reclassify_as_rejected(line, &RowError::DuplicateFaceCode(code));
    }
    info!(
        "joined faces with address tallies at {:.1?}",
        started.elapsed()
    );

    let outcomes = pool.install(|| {
        (0..muni_buckets)
            .into_par_iter()
            .map(|j| allocate_bucket(config, j, &joined_spill, &est_spill, &parts))
            .collect::<Vec<_>>()
    });
    for outcome in outcomes {
        report.merge(outcome?);
    }
    info!(
        "allocated {} municipalities at {:.1?}",
        report.per_municipality_totals.len(),
        started.elapsed()
    );

    if config.layout == OutputLayout::Combined {
        merge_parts(&parts, &config.out)?;
    }

    report
        .ingest
        .insert(RecordKind::Faces.name().to_string(), face_stats);
    report
        .ingest
        .insert(RecordKind::Species.name().to_string(), species_stats);
    report
        .ingest
        .insert(RecordKind::Establishments.name().to_string(), est_stats);
    report.normalize();
    if !report.is_conserved() {
        return Err(Error::Format("job totals are not conserved".into()));
    }
    write_reports(&report, &config.out)?;
    info!(
        "run finished in {:.1?}, {} rows",
        started.elapsed(),
        report.rows_written
    );
    Ok(report)
}

fn spill_faces(config: &RunConfig, buckets: &Buckets) -> Result<IngestStats, Error> {
    let mapping = &config.mappings.faces;
    let parser = FaceParser::new(mapping, false);
    let mut reader =
        IngestReader::new(open(&config.faces)?, mapping, parser)?.strict(config.strict);
    let mut writers = buckets.writers()?;
    for record in &mut reader {
        let record = record?;
        let (point, source) = representative_point(&record.geometry);
        let face = SpilledFace {
            line: record.line,
            face_code: record.face_code,
            municipality: record.municipality,
            point,
            source,
        };
        let i = spill::bucket_of(face.face_code.as_str(), buckets.len());
        spill::write_face(&mut writers[i], &face)?;
    }
    flush_all(writers)?;
    Ok(reader.into_stats())
}

fn spill_species(config: &RunConfig, buckets: &Buckets) -> Result<IngestStats, Error> {
    let mut reader =
        ingest::read_address_species(open(&config.species)?, &config.mappings.species)?
            .strict(config.strict);
    let mut writers = buckets.writers()?;
    for record in &mut reader {
        let a = record?;
        let i = spill::bucket_of(a.face_code.as_str(), buckets.len());
        spill::write_address(&mut writers[i], &a.face_code, a.cep, a.species)?;
    }
    flush_all(writers)?;
    Ok(reader.into_stats())
}

fn spill_establishments(
    config: &RunConfig,
    buckets: &Buckets,
) -> Result<(IngestStats, u64), Error> {
    let mut reader = ingest::read_establishments(
        open(&config.establishments)?,
        &config.mappings.establishments,
        &config.sectors,
    )?
    .strict(config.strict);
    let mut writers = spill::establishment_writers(buckets)?;
    let mut filtered = 0;
    for record in &mut reader {
        let e = record?;
        if config.year.is_some_and(|y| y != e.year) || !config.selects(&e.municipality) {
            filtered += 1;
            continue;
        }
        let i = spill::bucket_of(e.municipality.as_str(), buckets.len());
        spill::write_establishment(&mut writers[i], &e)?;
    }
    for mut w in writers {
        w.flush()?;
    }
    Ok((reader.into_stats(), filtered))
}

struct JoinOutcome {
    duplicates: Vec<(u64, FaceCode)>,
    species_faces_without_geometry: u64,
    species_rows_without_geometry: u64,
}

fn join_bucket(
    config: &RunConfig,
    i: usize,
    faces: &Buckets,
    species: &Buckets,
    out: &[Mutex<BufWriter<File>>],
) -> Result<JoinOutcome, Error> {
    let mut by_code: HashMap<FaceCode, (SpilledFace, AddressTally)> = HashMap::new();
    let mut duplicates = Vec::new();
    for line in faces.lines(i)? {
        let face = spill::read_face(&line?)?;
        match by_code.get_mut(&face.face_code) {
            // the earliest row of a repeated code wins
            Some((kept, _)) => {
                if face.line < kept.line {
                    duplicates.push((kept.line, kept.face_code.clone()));
                    *kept = face;
                } else {
                    duplicates.push((face.line, face.face_code));
                }
            }
            None => {
                by_code.insert(face.face_code.clone(), (face, AddressTally::new()));
            }
        }
    }
    faces.remove(i);

    let mut orphan_faces: HashSet<String> = HashSet::new();
    let mut orphan_rows = 0;
    for line in species.lines(i)? {
        let line = line?;
        let (code, cep, s) = spill::read_address(&line)?;
        let code = FaceCode::new(code).map_err(|e| Error::Format(e.to_string()))?;
        match by_code.get_mut(&code) {
            Some((_, tally)) => tally.add(cep, s, 1),
            None => {
                orphan_rows += 1;
                orphan_faces.insert(code.as_str().to_string());
            }
        }
    }
    species.remove(i);

    let mut local: Vec<Vec<u8>> = vec![Vec::new(); out.len()];
    for (face, tally) in by_code.values() {
        if config.selects(&face.municipality) {
            let j = spill::bucket_of(face.municipality.as_str(), out.len());
            spill::write_joined(&mut local[j], face, tally)?;
        }
    }
    for (j, buf) in local.iter().enumerate().filter(|(_, b)| !b.is_empty()) {
        out[j].lock().expect("writer lock").write_all(buf)?;
    }
    Ok(JoinOutcome {
        duplicates,
        species_faces_without_geometry: orphan_faces.len() as u64,
        species_rows_without_geometry: orphan_rows,
    })
}

type FaceGroup = Vec<(SpilledFace, AddressTally)>;

fn allocate_bucket(
    config: &RunConfig,
    j: usize,
    joined: &Buckets,
    establishments: &Buckets,
    parts: &Buckets,
) -> Result<RunReport, Error> {
    let mut faces: BTreeMap<Geocode, FaceGroup> = BTreeMap::new();
    for line in joined.lines(j)? {
        let (face, tally) = spill::read_joined(&line?)?;
        faces
            .entry(face.municipality)
            .or_default()
            .push((face, tally));
    }
    joined.remove(j);
    let mut ests: BTreeMap<Geocode, Vec<EstablishmentRecord>> = BTreeMap::new();
    for e in spill::read_establishments(establishments.path(j))? {
        ests.entry(e.municipality).or_default().push(e);
    }
    establishments.remove(j);

    let mut municipalities: Vec<Geocode> = faces.keys().chain(ests.keys()).copied().collect();
    municipalities.sort_unstable();
    municipalities.dedup();

    let mut report = RunReport::default();
    let mut rows: Vec<FormattedRow> = Vec::new();
    for g in municipalities {
        let group = faces.remove(&g).unwrap_or_default();
        let est = ests.remove(&g).unwrap_or_default();
        let attempt = catch_unwind(AssertUnwindSafe(|| {
            allocate_municipality(config, g, group, &est)
        }));
        let (mut muni_rows, muni_report) = match attempt {
            Ok(done) => done,
            Err(panic) => {
                let reason = panic_message(panic.as_ref());
                if config.strict {
                    return Err(Error::Partition {
                        municipality: g.to_string(),
                        reason,
                    });
                }
                warn!("municipality {g} skipped: {reason}");
                (Vec::new(), failed_municipality_report(g, &est, reason))
            }
        };
        if config.layout == OutputLayout::PerMunicipality {
            let dir = config.out.join(g.as_str());
            fs::create_dir_all(&dir)?;
            write_rows(&muni_rows, &dir)?;
            write_reports(&muni_report, &dir)?;
        } else {
            rows.append(&mut muni_rows);
        }
        report.merge(muni_report);
    }

    if config.layout == OutputLayout::Combined {
        rows.sort_unstable_by(|a, b| (&a.face_code, &a.cep).cmp(&(&b.face_code, &b.cep)));
        let mut w = BufWriter::with_capacity(IO_BUFFER, File::create(parts.path(j))?);
        for r in &rows {
            w.write_all(r.csv_line().as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(report)
}

/// Allocates one municipality. Rows come back in output order.
fn allocate_municipality(
    config: &RunConfig,
    g: Geocode,
    group: FaceGroup,
    establishments: &[EstablishmentRecord],
) -> (Vec<FormattedRow>, RunReport) {
    let bbox = config.bboxes.get(&g);
    let mut degenerate = Vec::new();
    let mut warnings = Vec::new();
    let faces: Vec<StreetFace> = group
        .into_iter()
        .map(|(f, tally)| {
            if f.source == PointSource::FirstVertex {
                degenerate.push(f.face_code.clone());
            }
            if validate_coords(f.point, bbox) != Verdict::Ok {
                warnings.push(f.face_code.clone());
            }
            StreetFace {
                face_code: f.face_code,
                municipality: f.municipality,
                geometry: FaceGeometry::Point(f.point),
                tally,
            }
        })
        .collect();
    let index = build_index(faces);
    let out = allocate_partition(
        &index,
        establishments,
        &config.compatibility,
        config.rounding,
    );
    let rows: Vec<FormattedRow> = out
        .rows
        .into_iter()
        .map(|r| {
            let face = index.face(r.face);
            let p = face.geometry.vertices()[0];
            FormattedRow::from(&JobPoint {
                face_code: face.face_code.clone(),
                cep: r.cep,
                non_residential: r.non_residential,
                jobs: r.jobs,
                lon: p.lon,
                lat: p.lat,
            })
        })
        .collect();
    let mut report = out.report;
    report.degenerate_faces = degenerate;
    report.coordinate_warnings = warnings;
    report.rows_written = rows.len() as u64;
    report.normalize();
    (rows, report)
}

/// Report for a municipality whose allocation failed: all of its jobs are
/// carried as unallocated so the run totals still balance.
fn failed_municipality_report(
    g: Geocode,
    establishments: &[EstablishmentRecord],
    reason: String,
) -> RunReport {
    let mut report = RunReport::default();
    let totals = report.per_municipality_totals.entry(g).or_default();
    for e in establishments {
        totals.input += e.jobs;
        totals.unallocated += e.jobs;
        totals.establishments += 1;
    }
    for e in establishments {
        report.input_jobs_total += e.jobs;
        *report
            .rule_histogram
            .entry(AllocationRule::Unallocated)
            .or_default() += 1;
        if e.jobs == 0 {
            report.zero_job_establishments += 1;
        } else {
            report.unallocated.push(UnallocatedEntry {
                establishment_id: e.establishment_id.clone(),
                municipality: g,
                cep: e.cep,
                jobs: e.jobs,
                reason: format!("allocation failed: {reason}"),
            });
        }
    }
    report.failed_municipalities.insert(g, reason);
    report.normalize();
    report
}

fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    panic
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| panic.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

fn write_rows(rows: &[FormattedRow], dir: &Path) -> Result<(), Error> {
    let mut csv = CsvWriter::new(BufWriter::new(File::create(dir.join(CSV_FILE))?))?;
    let mut geo = GeoJsonWriter::new(BufWriter::new(File::create(dir.join(GEOJSON_FILE))?))?;
    for r in rows {
        csv.write_row(r)?;
        geo.write_row(r)?;
    }
    csv.finish()?;
    geo.finish()?;
    Ok(())
}

fn write_reports(report: &RunReport, dir: &Path) -> Result<(), Error> {
    export::write_report(report, BufWriter::new(File::create(dir.join(REPORT_FILE))?))?;
    export::write_report_text(
        report,
        BufWriter::new(File::create(dir.join(REPORT_TEXT_FILE))?),
    )?;
    Ok(())
}

/// k-way merge of the sorted part files into the combined outputs.
fn merge_parts(parts: &Buckets, out: &Path) -> Result<(), Error> {
    let mut readers = Vec::with_capacity(parts.len());
    for i in 0..parts.len() {
        readers.push(parts.lines(i)?);
    }
    let mut heap = BinaryHeap::new();
    for (i, r) in readers.iter_mut().enumerate() {
        if let Some(line) = r.next().transpose()? {
            heap.push(Reverse((line, i)));
        }
    }
    let mut csv = CsvWriter::new(BufWriter::new(File::create(out.join(CSV_FILE))?))?;
    let mut geo = GeoJsonWriter::new(BufWriter::new(File::create(out.join(GEOJSON_FILE))?))?;
    while let Some(Reverse((line, i))) = heap.pop() {
        let row = FormattedRow::parse_csv_line(&line)?;
        csv.write_row(&row)?;
        geo.write_row(&row)?;
        if let Some(next) = readers[i].next().transpose()? {
            heap.push(Reverse((next, i)));
        }
    }
    csv.finish()?;
    geo.finish()?;
    Ok(())
}

/// Inputs for [`inspect`]; any of the three files may be left out.
#[derive(Debug, Clone)]
pub struct InspectConfig {
    pub faces: Option<PathBuf>,
    pub species: Option<PathBuf>,
    pub establishments: Option<PathBuf>,
    pub mappings: MappingSet,
    pub sectors: SectorMappingConfig,
    pub strict: bool,
}

/// Reads the inputs through the validating readers without allocating and
/// returns their statistics keyed by input name.
pub fn inspect(config: &InspectConfig) -> Result<BTreeMap<String, IngestStats>, Error> {
    let mut stats = BTreeMap::new();
    if let Some(path) = &config.faces {
        let mut r = ingest::read_faces(open(path)?, &config.mappings.faces)?.strict(config.strict);
        for item in &mut r {
            item?;
        }
        stats.insert(RecordKind::Faces.name().to_string(), r.into_stats());
    }
    if let Some(path) = &config.species {
        let mut r = ingest::read_address_species(open(path)?, &config.mappings.species)?
            .strict(config.strict);
        for item in &mut r {
            item?;
        }
        stats.insert(RecordKind::Species.name().to_string(), r.into_stats());
    }
    if let Some(path) = &config.establishments {
        let mut r = ingest::read_establishments(
            open(path)?,
            &config.mappings.establishments,
            &config.sectors,
        )?
        .strict(config.strict);
        for item in &mut r {
            item?;
        }
        stats.insert(
            RecordKind::Establishments.name().to_string(),
            r.into_stats(),
        );
    }
    Ok(stats)
}
