//! Output files: the job-point CSV, its GeoJSON twin, and the run report.
//!
//! The CSV header and column order follow the published job-point tables,
//! including the space in `non residencial`. Rows are written in ascending
//! face code, then CEP. Numbers never carry trailing zeros: jobs are exact
//! integers when integral and otherwise rounded half-to-even at six
//! decimals; coordinates are rounded to six decimals.

use std::io::{self, BufRead, Write};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::ser::{Serialize, SerializeMap, Serializer};
use serde_json::Value;

use crate::model::{JobPoint, Jobs, MunicipalityTotals, RunReport, UnallocatedEntry};
use crate::Error;

pub const CSV_HEADER: &str = "cod_face,CEP,non residencial,jobs,lon,lat";

const DECIMALS: u32 = 6;

fn trim_decimal(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Exact rational → decimal with at most six places, round half to even.
pub fn format_jobs(jobs: &Jobs) -> String {
    let negative = jobs.is_negative();
    let abs = jobs.abs();
    let scale = BigInt::from(10u32).pow(DECIMALS);
    let scaled = abs.numer() * &scale;
    let (mut q, rem) = scaled.div_rem(abs.denom());
    let twice = rem * 2u32;
    if twice > *abs.denom() || (twice == *abs.denom() && q.is_odd()) {
        q += 1u32;
    }
    let (int, frac) = q.div_rem(&scale);
    let mut s = if negative && !(int.is_zero() && frac.is_zero()) {
        format!("-{int}")
    } else {
        int.to_string()
    };
    if !frac.is_zero() {
        s.push('.');
        s.push_str(&format!("{:0>6}", frac.to_string()));
    }
    trim_decimal(s)
}

/// Degrees with at most six decimals, no trailing zeros.
pub fn format_degrees(v: f64) -> String {
    trim_decimal(format!("{v:.6}"))
}

/// Exact `p/q` (or `p`) spelling used in machine-readable outputs.
pub fn exact_string(jobs: &Jobs) -> String {
    if jobs.is_integer() {
        jobs.numer().to_string()
    } else {
        format!("{}/{}", jobs.numer(), jobs.denom())
    }
}

pub fn parse_exact(s: &str) -> Option<Jobs> {
    match s.split_once('/') {
        Some((n, d)) => {
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(BigRational::new(n.trim().parse().ok()?, d))
        }
        None => Some(BigRational::from_integer(s.trim().parse().ok()?)),
    }
}

/// A job point with every field already spelled out.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FormattedRow {
    pub face_code: String,
    pub cep: String,
    pub non_residential: u64,
    pub jobs: String,
    pub lon: String,
    pub lat: String,
}

impl From<&JobPoint> for FormattedRow {
    fn from(p: &JobPoint) -> Self {
        FormattedRow {
            face_code: p.face_code.as_str().to_string(),
            cep: p.cep.as_str().to_string(),
            non_residential: p.non_residential,
            jobs: format_jobs(&p.jobs),
            lon: format_degrees(p.lon),
            lat: format_degrees(p.lat),
        }
    }
}

impl FormattedRow {
    /// CSV line without the terminator. Lines sort in the same order as
    /// their (face code, CEP) keys.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.face_code, self.cep, self.non_residential, self.jobs, self.lon, self.lat
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<FormattedRow, Error> {
        let bad = || Error::Format(format!("bad job-point line {line:?}"));
        let mut it = line.split(',');
        let mut next = || it.next().map(str::to_string).ok_or_else(bad);
        let row = FormattedRow {
            face_code: next()?,
            cep: next()?,
            non_residential: next()?.parse().map_err(|_| bad())?,
            jobs: next()?,
            lon: next()?,
            lat: next()?,
        };
        if it.next().is_some() {
            return Err(bad());
        }
        Ok(row)
    }
}

/// Streaming CSV writer.
pub struct CsvWriter<W: Write> {
    sink: W,
    rows: u64,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut sink: W) -> io::Result<Self> {
        sink.write_all(CSV_HEADER.as_bytes())?;
        sink.write_all(b"\n")?;
        Ok(CsvWriter { sink, rows: 0 })
    }

    pub fn write_row(&mut self, row: &FormattedRow) -> io::Result<()> {
        self.sink.write_all(row.csv_line().as_bytes())?;
        self.sink.write_all(b"\n")?;
        self.rows += 1;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<u64> {
        self.sink.flush()?;
        Ok(self.rows)
    }
}

/// Streaming GeoJSON FeatureCollection writer, one feature per line.
pub struct GeoJsonWriter<W: Write> {
    sink: W,
    rows: u64,
}

impl<W: Write> GeoJsonWriter<W> {
    pub fn new(mut sink: W) -> io::Result<Self> {
        sink.write_all(br#"{"type":"FeatureCollection","features":["#)?;
        Ok(GeoJsonWriter { sink, rows: 0 })
    }

    pub fn write_row(&mut self, row: &FormattedRow) -> io::Result<()> {
        let sep = if self.rows == 0 { "\n" } else { ",\n" };
        // face codes and CEPs are digit strings, safe to embed unescaped
        write!(
            self.sink,
            "{sep}{{\"type\":\"Feature\",\"geometry\":{{\"type\":\"Point\",\"coordinates\":[{},{}]}},\
             \"properties\":{{\"cod_face\":\"{}\",\"CEP\":\"{}\",\"non_residencial\":{},\"jobs\":{}}}}}",
            row.lon, row.lat, row.face_code, row.cep, row.non_residential, row.jobs
        )?;
        self.rows += 1;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<u64> {
        if self.rows > 0 {
            self.sink.write_all(b"\n")?;
        }
        self.sink.write_all(b"]}\n")?;
        self.sink.flush()?;
        Ok(self.rows)
    }
}

/// Writes `rows` (already in output order) as CSV; returns the row count.
pub fn write_csv<'a, I, W>(rows: I, sink: W) -> io::Result<u64>
where
    I: IntoIterator<Item = &'a JobPoint>,
    W: Write,
{
    let mut w = CsvWriter::new(sink)?;
    for p in rows {
        w.write_row(&FormattedRow::from(p))?;
    }
    w.finish()
}

pub fn write_geojson<'a, I, W>(rows: I, sink: W) -> io::Result<u64>
where
    I: IntoIterator<Item = &'a JobPoint>,
    W: Write,
{
    let mut w = GeoJsonWriter::new(sink)?;
    for p in rows {
        w.write_row(&FormattedRow::from(p))?;
    }
    w.finish()
}

/// Reads a job-point CSV written by [`CsvWriter`].
pub fn read_csv<R: BufRead>(source: R) -> Result<Vec<FormattedRow>, Error> {
    let mut lines = source.lines();
    match lines.next().transpose()? {
        Some(header) if header == CSV_HEADER => {}
        Some(_) => return Err(Error::Format("unexpected job-point CSV header".into())),
        None => return Ok(Vec::new()),
    }
    lines
        .filter(|l| !matches!(l, Ok(s) if s.is_empty()))
        .map(|l| FormattedRow::parse_csv_line(&l?))
        .collect()
}

struct JobsJson<'a>(&'a Jobs);

impl Serialize for JobsJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(2))?;
        m.serialize_entry("decimal", &format_jobs(self.0))?;
        m.serialize_entry("exact", &exact_string(self.0))?;
        m.end()
    }
}

struct MunicipalityJson<'a>(&'a MunicipalityTotals);

impl Serialize for MunicipalityJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let t = self.0;
        let conserved = BigRational::from_integer(t.input.into())
            == &t.allocated + BigRational::from_integer(t.unallocated.into());
        let mut m = s.serialize_map(Some(7))?;
        m.serialize_entry("allocated", &JobsJson(&t.allocated))?;
        m.serialize_entry("conserved", &conserved)?;
        m.serialize_entry("establishments", &t.establishments)?;
        m.serialize_entry("faces", &t.faces)?;
        m.serialize_entry("input", &t.input)?;
        m.serialize_entry("single_cep", &t.single_cep)?;
        m.serialize_entry("unallocated", &t.unallocated)?;
        m.end()
    }
}

struct UnallocatedJson<'a>(&'a UnallocatedEntry);

impl Serialize for UnallocatedJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let u = self.0;
        let mut m = s.serialize_map(Some(5))?;
        m.serialize_entry("cep", &u.cep)?;
        m.serialize_entry("establishment_id", &u.establishment_id)?;
        m.serialize_entry("jobs", &u.jobs)?;
        m.serialize_entry("municipality", &u.municipality)?;
        m.serialize_entry("reason", &u.reason)?;
        m.end()
    }
}

/// Serializes lazily, one item at a time.
struct Each<I>(std::cell::RefCell<Option<I>>);

impl<I, T> Serialize for Each<I>
where
    I: Iterator<Item = T>,
    T: Serialize,
{
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let items = self.0.borrow_mut().take().expect("serialized once");
        s.collect_seq(items)
    }
}

struct EachEntry<I>(std::cell::RefCell<Option<I>>);

impl<I, K, V> Serialize for EachEntry<I>
where
    I: Iterator<Item = (K, V)>,
    K: Serialize,
    V: Serialize,
{
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let entries = self.0.borrow_mut().take().expect("serialized once");
        s.collect_map(entries)
    }
}

fn each<I: Iterator>(items: I) -> Each<I> {
    Each(std::cell::RefCell::new(Some(items)))
}

fn each_entry<I: Iterator>(entries: I) -> EachEntry<I> {
    EachEntry(std::cell::RefCell::new(Some(entries)))
}

/// Machine-readable report. Keys come out sorted and every list is
/// streamed, so rendering is byte-stable and needs no copy of the report.
struct ReportJson<'a>(&'a RunReport);

impl Serialize for ReportJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let r = self.0;
        let mut m = s.serialize_map(Some(17))?;
        m.serialize_entry("allocated_jobs_total", &JobsJson(&r.allocated_jobs_total))?;
        m.serialize_entry("conserved", &r.is_conserved())?;
        m.serialize_entry("coordinate_warnings", &r.coordinate_warnings)?;
        m.serialize_entry("degenerate_faces", &r.degenerate_faces)?;
        m.serialize_entry("establishments", &r.establishments_total())?;
        m.serialize_entry("establishments_filtered", &r.establishments_filtered)?;
        m.serialize_entry("failed_municipalities", &r.failed_municipalities)?;
        m.serialize_entry("ingest", &r.ingest)?;
        m.serialize_entry("input_jobs_total", &r.input_jobs_total)?;
        m.serialize_entry(
            "per_municipality",
            &each_entry(
                r.per_municipality_totals
                    .iter()
                    .map(|(g, t)| (g, MunicipalityJson(t))),
            ),
        )?;
        m.serialize_entry("rows_written", &r.rows_written)?;
        m.serialize_entry(
            "rule_histogram",
            &each_entry(r.rule_histogram.iter().map(|(rule, n)| (rule.name(), n))),
        )?;
        m.serialize_entry(
            "species_faces_without_geometry",
            &r.species_faces_without_geometry,
        )?;
        m.serialize_entry(
            "species_rows_without_geometry",
            &r.species_rows_without_geometry,
        )?;
        m.serialize_entry(
            "unallocated",
            &each(r.unallocated.iter().map(UnallocatedJson)),
        )?;
        m.serialize_entry("unallocated_jobs_total", &r.unallocated_jobs_total())?;
        m.serialize_entry("zero_job_establishments", &r.zero_job_establishments)?;
        m.end()
    }
}

/// The machine-readable report as a JSON value.
pub fn report_json(report: &RunReport) -> Value {
    serde_json::to_value(ReportJson(report)).expect("report serializes")
}

/// Writes the machine-readable report (pretty JSON).
pub fn write_report<W: Write>(report: &RunReport, mut sink: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut sink, &ReportJson(report))?;
    sink.write_all(b"\n")?;
    sink.flush()
}

/// Writes the human-readable summary.
pub fn write_report_text<W: Write>(report: &RunReport, mut sink: W) -> io::Result<()> {
    let w = &mut sink;
    writeln!(w, "job allocation report")?;
    writeln!(w, "=====================")?;
    writeln!(w, "input jobs:        {}", report.input_jobs_total)?;
    writeln!(
        w,
        "allocated jobs:    {}",
        format_jobs(&report.allocated_jobs_total)
    )?;
    writeln!(w, "unallocated jobs:  {}", report.unallocated_jobs_total())?;
    writeln!(
        w,
        "conserved:         {}",
        if report.is_conserved() { "yes" } else { "NO" }
    )?;
    writeln!(w, "output rows:       {}", report.rows_written)?;
    writeln!(w)?;
    writeln!(
        w,
        "establishments by rule ({} total)",
        report.establishments_total()
    )?;
    for (rule, n) in &report.rule_histogram {
        writeln!(w, "  {:<22}{n}", rule.name())?;
    }
    writeln!(
        w,
        "  zero-job establishments: {}",
        report.zero_job_establishments
    )?;
    writeln!(
        w,
        "  filtered out (year/municipality): {}",
        report.establishments_filtered
    )?;
    writeln!(w)?;
    writeln!(w, "inputs")?;
    for (name, s) in &report.ingest {
        writeln!(
            w,
            "  {name:<16}read {:>10}  accepted {:>10}  rejected {:>8}",
            s.rows_read, s.rows_accepted, s.rows_rejected
        )?;
        for (reason, n) in &s.rejections_by_reason {
            writeln!(w, "    {reason}: {n}")?;
        }
    }
    writeln!(
        w,
        "  species faces without geometry: {} ({} address rows ignored)",
        report.species_faces_without_geometry, report.species_rows_without_geometry
    )?;
    writeln!(
        w,
        "  degenerate faces (point or zero length): {}",
        report.degenerate_faces.len()
    )?;
    writeln!(
        w,
        "  representative points outside municipality bbox: {}",
        report.coordinate_warnings.len()
    )?;
    if !report.failed_municipalities.is_empty() {
        writeln!(w)?;
        writeln!(w, "failed municipalities")?;
        for (g, why) in &report.failed_municipalities {
            writeln!(w, "  {g}: {why}")?;
        }
    }
    if !report.unallocated.is_empty() {
        writeln!(w)?;
        writeln!(w, "unallocated establishments")?;
        for u in &report.unallocated {
            writeln!(
                w,
                "  {} {} {} jobs={} ({})",
                u.establishment_id, u.municipality, u.cep, u.jobs, u.reason
            )?;
        }
    }
    writeln!(w)?;
    writeln!(w, "per municipality (input / allocated / unallocated)")?;
    for (g, t) in &report.per_municipality_totals {
        writeln!(
            w,
            "  {g}  {} / {} / {}{}",
            t.input,
            format_jobs(&t.allocated),
            t.unallocated,
            if t.single_cep { "  [single CEP]" } else { "" }
        )?;
    }
    writeln!(w)?;
    writeln!(
        w,
        "note: jobs are spread by address counts, so in single-CEP municipalities commercial \
         centres tend to be over-estimated and industrial districts under-estimated."
    )?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normalize_cep, FaceCode};

    fn r(n: i64, d: i64) -> Jobs {
        BigRational::new(n.into(), d.into())
    }

    fn point(code: &str, jobs: Jobs) -> JobPoint {
        JobPoint {
            face_code: FaceCode::new(code).unwrap(),
            cep: normalize_cep("77001422").unwrap(),
            non_residential: 2,
            jobs,
            lon: -48.3533,
            lat: -10.1651,
        }
    }

    // Reference: scale by 10^6 with exact integer arithmetic, round half
    // even, then render with a fixed six-digit fraction and strip zeros.
    fn format_oracle(n: i64, d: i64) -> String {
        let scaled = i128::from(n) * 1_000_000;
        let d = i128::from(d);
        let (mut q, rem) = (scaled / d, scaled % d);
        if 2 * rem > d || (2 * rem == d && q % 2 == 1) {
            q += 1;
        }
        let s = format!("{}.{:06}", q / 1_000_000, q % 1_000_000);
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }

    #[test]
    fn jobs_formatting() {
        assert_eq!(format_jobs(&r(8, 1)), "8");
        assert_eq!(format_jobs(&r(15, 2)), "7.5");
        assert_eq!(format_jobs(&r(15, 2)), format_oracle(15, 2));
        assert_eq!(format_jobs(&r(10, 3)), "3.333333");
        assert_eq!(format_jobs(&r(20, 3)), "6.666667");
        assert_eq!(format_jobs(&r(0, 1)), "0");
        // exact ties at the seventh decimal
        assert_eq!(format_jobs(&r(1, 2_000_000)), "0");
        assert_eq!(format_jobs(&r(3, 2_000_000)), "0.000002");
        assert_eq!(format_jobs(&r(5, 2_000_000)), "0.000002");
        for (n, d) in [
            (1, 7),
            (22, 7),
            (1_000_001, 3),
            (7, 16),
            (123_456_789, 1000),
        ] {
            assert_eq!(format_jobs(&r(n, d)), format_oracle(n, d), "{n}/{d}");
        }
    }

    #[test]
    fn degree_formatting() {
        assert_eq!(format_degrees(-48.3533), "-48.3533");
        assert_eq!(format_degrees(-10.1651), "-10.1651");
        assert_eq!(format_degrees(-48.349), "-48.349");
        assert_eq!(format_degrees(1.0), "1");
        assert_eq!(format_degrees(-0.0000001), "0");
        assert_eq!(format_degrees(12.34567891), "12.345679");
    }

    #[test]
    fn table_row_line() {
        let mut out = Vec::new();
        let n = write_csv(&[point("172100005000001000000", r(8, 1))], &mut out).unwrap();
        assert_eq!(n, 1);
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "cod_face,CEP,non residencial,jobs,lon,lat\n\
             172100005000001000000,77001422,2,8,-48.3533,-10.1651\n"
        );
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut out = Vec::new();
        assert_eq!(write_csv(&[], &mut out).unwrap(), 0);
        assert_eq!(out, b"cod_face,CEP,non residencial,jobs,lon,lat\n");
    }

    #[test]
    fn fractional_jobs_unpadded() {
        let mut out = Vec::new();
        write_csv(&[point("172100005000001000000", r(15, 2))], &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains(",2,7.5,-48.3533,"));
    }

    #[test]
    fn csv_round_trip() {
        let points = vec![
            point("172100005000001000000", r(8, 1)),
            point("172100005000002000000", r(10, 3)),
        ];
        let mut out = Vec::new();
        write_csv(&points, &mut out).unwrap();
        let back = read_csv(out.as_slice()).unwrap();
        let want: Vec<FormattedRow> = points.iter().map(FormattedRow::from).collect();
        assert_eq!(back, want);
    }

    #[test]
    fn geojson_matches_csv_order() {
        let points = vec![
            point("172100005000001000000", r(8, 1)),
            point("172100005000002000000", r(3, 1)),
            point("172100005000003000000", r(15, 2)),
        ];
        let mut out = Vec::new();
        assert_eq!(write_geojson(&points, &mut out).unwrap(), 3);
        let fc: geojson::FeatureCollection = String::from_utf8(out).unwrap().parse().unwrap();
        let codes: Vec<String> = fc
            .features
            .iter()
            .map(|f| {
                f.property("cod_face")
                    .unwrap()
                    .as_str()
                    .unwrap()
                    .to_string()
            })
            .collect();
        let mut sorted = codes.clone();
        sorted.sort();
        assert_eq!(codes, sorted);
        let g = fc.features[0].geometry.as_ref().unwrap();
        assert_eq!(g.value, geojson::Value::Point(vec![-48.3533, -10.1651]));
        assert_eq!(fc.features[2].property("jobs").unwrap().as_f64(), Some(7.5));
    }

    #[test]
    fn empty_geojson() {
        let mut out = Vec::new();
        write_geojson(&[], &mut out).unwrap();
        let fc: geojson::FeatureCollection = String::from_utf8(out).unwrap().parse().unwrap();
        assert!(fc.features.is_empty());
    }

    #[test]
    fn exact_spelling_round_trips() {
        for j in [r(8, 1), r(10, 3), r(0, 1)] {
            assert_eq!(parse_exact(&exact_string(&j)).unwrap(), j);
        }
        assert!(parse_exact("1/0").is_none());
    }
}
