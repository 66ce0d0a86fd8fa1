//! Seeded synthetic inputs with a ground-truth ledger.
//!
//! The generator writes faces, species and establishment files in the
//! normalized layouts, a sector mapping for the activity codes it uses, a run
//! config pointing at all of them, and optionally `truth.csv`: the expected
//! jobs of every (face, CEP) row, computed by a deliberately plain
//! per-establishment implementation of the allocation rule that shares no
//! code with [`crate::allocator`].
//!
//! Municipalities are generated one at a time, so memory does not grow with
//! the number of municipalities.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::export::exact_string;
use crate::Error;

pub const FACES_FILE: &str = "faces.csv";
pub const SPECIES_FILE: &str = "species.csv";
pub const ESTABLISHMENTS_FILE: &str = "establishments.csv";
pub const SECTORS_FILE: &str = "sectors.toml";
pub const RUN_CONFIG_FILE: &str = "run.toml";
pub const TRUTH_FILE: &str = "truth.csv";
pub const TRUTH_HEADER: &str = "cod_face,CEP,jobs,contributors";

/// Activity codes emitted per sector, and the prefixes that classify them.
const ACTIVITIES: [(&str, &str, &str); 4] = [
    ("Education", "85", "8513900"),
    ("Health", "86", "8610101"),
    ("Agriculture", "01", "0111301"),
    ("Other", "47", "4711302"),
];

/// Species each sector may land on, by activity index above.
const COMPATIBLE_SPECIES: [u8; 4] = [4, 5, 3, 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub municipalities: u32,
    /// Inclusive ranges.
    pub faces_per_municipality: [u32; 2],
    pub ceps_per_municipality: [u32; 2],
    /// Share of municipalities with a single CEP; the count is rounded to
    /// the nearest integer.
    pub single_cep_fraction: f64,
    /// Per species code 1..=7, the maximum address count on one face; counts
    /// are uniform from zero.
    pub species_max: [u32; 7],
    /// Share of faces that also carry addresses of a neighbouring CEP.
    pub multi_cep_face_fraction: f64,
    pub establishments_per_municipality: [u32; 2],
    /// Share of establishments whose CEP matches no face.
    pub orphan_cep_fraction: f64,
    pub jobs: [u64; 2],
    /// Extra municipalities with establishments but no faces.
    pub faceless_municipalities: u32,
    pub year: u16,
    pub seed: u64,
    pub truth: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            municipalities: 10,
            faces_per_municipality: [50, 150],
            ceps_per_municipality: [2, 12],
            single_cep_fraction: 0.2,
            species_max: [4, 0, 1, 1, 1, 2, 0],
            multi_cep_face_fraction: 0.1,
            establishments_per_municipality: [20, 80],
            orphan_cep_fraction: 0.05,
            jobs: [0, 50],
            faceless_municipalities: 0,
            year: 2019,
            seed: 1,
            truth: true,
        }
    }
}

/// Paths of one generated file set.
#[derive(Debug, Clone)]
pub struct GeneratedFiles {
    pub faces: PathBuf,
    pub species: PathBuf,
    pub establishments: PathBuf,
    pub sectors: PathBuf,
    pub run_config: PathBuf,
    pub truth: Option<PathBuf>,
}

/// Counts for one generated file set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SyntheticSummary {
    pub faces: u64,
    pub species_rows: u64,
    pub establishments: u64,
    pub input_jobs: u64,
    pub unallocated_jobs: u64,
    pub single_cep_municipalities: u64,
}

fn check_range<T: PartialOrd + std::fmt::Debug>(name: &str, r: &[T; 2]) -> Result<(), Error> {
    if r[0] > r[1] {
        return Err(Error::Config(format!("{name}: empty range {r:?}")));
    }
    Ok(())
}

fn check_fraction(name: &str, f: f64) -> Result<(), Error> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {f}")));
    }
    Ok(())
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<SyntheticSpec, Error> {
        toml::from_str(text).map_err(|e| Error::Config(format!("synthetic spec: {e}")))
    }

    pub fn validate(&self) -> Result<(), Error> {
        check_range("faces_per_municipality", &self.faces_per_municipality)?;
        check_range("ceps_per_municipality", &self.ceps_per_municipality)?;
        check_range(
            "establishments_per_municipality",
            &self.establishments_per_municipality,
        )?;
        check_range("jobs", &self.jobs)?;
        check_fraction("single_cep_fraction", self.single_cep_fraction)?;
        check_fraction("multi_cep_face_fraction", self.multi_cep_face_fraction)?;
        check_fraction("orphan_cep_fraction", self.orphan_cep_fraction)?;
        if self.ceps_per_municipality[0] == 0 {
            return Err(Error::Config(
                "ceps_per_municipality must start at 1".into(),
            ));
        }
        let total = u64::from(self.municipalities) + u64::from(self.faceless_municipalities);
        if total > 8_999_999 {
            return Err(Error::Config(
                "too many municipalities for 7-digit geocodes".into(),
            ));
        }
        // one spare CEP per municipality for orphan establishments
        let stride = u64::from(self.ceps_per_municipality[1]) + 1;
        if 10_000_000 + total * stride > 99_999_999 {
            return Err(Error::Config(
                "CEP space exhausted; lower the CEP range".into(),
            ));
        }
        if u64::from(self.faces_per_municipality[1]) > 99_999_999_999_999 {
            return Err(Error::Config("faces_per_municipality too large".into()));
        }
        Ok(())
    }

    /// Number of single-CEP municipalities.
    pub fn single_cep_count(&self) -> u32 {
        (self.single_cep_fraction * f64::from(self.municipalities)).round() as u32
    }
}

/// One generated face: code, vertices and address counts per (CEP, species).
struct Face {
    code: String,
    vertices: Vec<(f64, f64)>,
    addresses: BTreeMap<(u32, u8), u32>,
}

struct Establishment {
    id: String,
    cep: u32,
    activity: usize,
    jobs: u64,
}

fn sample<R: Rng>(rng: &mut R, r: [u32; 2]) -> u32 {
    rng.random_range(r[0]..=r[1])
}

/// Writes the file set for `spec` into `dir`.
pub fn generate(
    spec: &SyntheticSpec,
    dir: &Path,
) -> Result<(GeneratedFiles, SyntheticSummary), Error> {
    spec.validate()?;
    fs::create_dir_all(dir)?;
    let files = GeneratedFiles {
        faces: dir.join(FACES_FILE),
        species: dir.join(SPECIES_FILE),
        establishments: dir.join(ESTABLISHMENTS_FILE),
        sectors: dir.join(SECTORS_FILE),
        run_config: dir.join(RUN_CONFIG_FILE),
        truth: spec.truth.then(|| dir.join(TRUTH_FILE)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut faces_out = csv::Writer::from_writer(BufWriter::new(File::create(&files.faces)?));
    let mut species_out = BufWriter::new(File::create(&files.species)?);
    let mut est_out =
        csv::Writer::from_writer(BufWriter::new(File::create(&files.establishments)?));
    let mut truth_out = match &files.truth {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    faces_out.write_record(["face_code", "municipality", "wkt"])?;
    writeln!(species_out, "face_code,cep,species")?;
    est_out.write_record([
        "establishment_id",
        "municipality",
        "cep",
        "activity",
        "jobs",
        "year",
    ])?;
    if let Some(t) = &mut truth_out {
        writeln!(t, "{TRUTH_HEADER}")?;
    }

    let mut single = vec![false; spec.municipalities as usize];
    for s in single.iter_mut().take(spec.single_cep_count() as usize) {
        *s = true;
    }
    single.shuffle(&mut rng);

    let stride = spec.ceps_per_municipality[1] + 1;
    let total = spec.municipalities + spec.faceless_municipalities;
    let mut summary = SyntheticSummary::default();
    for m in 0..total {
        let geocode = format!("{:07}", 1_000_000 + m);
        let cep_base = 10_000_000 + m * stride;
        let has_faces = m < spec.municipalities;
        let single_cep = has_faces && single[m as usize];
        let n_ceps = if single_cep {
            1
        } else {
            sample(&mut rng, spec.ceps_per_municipality)
        };
        summary.single_cep_municipalities += u64::from(single_cep);

        let faces = if has_faces {
            make_faces(spec, &mut rng, &geocode, m, cep_base, n_ceps)
        } else {
            Vec::new()
        };
        let establishments = make_establishments(spec, &mut rng, &geocode, cep_base, n_ceps);

        for f in &faces {
            let coords: Vec<String> = f
                .vertices
                .iter()
                .map(|(x, y)| format!("{x:.6} {y:.6}"))
                .collect();
            faces_out.write_record([
                f.code.as_str(),
                geocode.as_str(),
                &format!("LINESTRING ({})", coords.join(", ")),
            ])?;
            for (&(cep, species), &n) in &f.addresses {
                for _ in 0..n {
                    writeln!(species_out, "{},{},{}", f.code, cep, species)?;
                }
                summary.species_rows += u64::from(n);
            }
        }
        for e in &establishments {
            est_out.write_record([
                e.id.as_str(),
                geocode.as_str(),
                &e.cep.to_string(),
                ACTIVITIES[e.activity].2,
                &e.jobs.to_string(),
                &spec.year.to_string(),
            ])?;
            summary.input_jobs += e.jobs;
        }
        summary.faces += faces.len() as u64;
        summary.establishments += establishments.len() as u64;

        let (rows, unallocated) = oracle(&faces, &establishments);
        summary.unallocated_jobs += unallocated;
        if let Some(t) = &mut truth_out {
            for ((code, cep), (jobs, contributors)) in rows {
                writeln!(t, "{code},{cep},{},{contributors}", exact_string(&jobs))?;
            }
        }
    }
    faces_out.flush()?;
    species_out.flush()?;
    est_out.flush()?;
    if let Some(mut t) = truth_out {
        t.flush()?;
    }

    let mut sectors = String::from("[prefixes]\n");
    for (sector, prefix, _) in ACTIVITIES {
        sectors.push_str(&format!("\"{prefix}\" = \"{sector}\"\n"));
    }
    fs::write(&files.sectors, sectors)?;
    fs::write(
        &files.run_config,
        format!(
            "faces = \"{FACES_FILE}\"\nspecies = \"{SPECIES_FILE}\"\n\
             establishments = \"{ESTABLISHMENTS_FILE}\"\nsectors = \"{SECTORS_FILE}\"\n\
             out = \"output\"\nyear = {}\n",
            spec.year
        ),
    )?;
    Ok((files, summary))
}

fn make_faces<R: Rng>(
    spec: &SyntheticSpec,
    rng: &mut R,
    geocode: &str,
    m: u32,
    cep_base: u32,
    n_ceps: u32,
) -> Vec<Face> {
    // municipality centres on a grid inside Brazil
    let centre = (
        -70.0 + f64::from(m % 200) * 0.15,
        -30.0 + f64::from(m / 200 % 200) * 0.12,
    );
    let n_faces = sample(rng, spec.faces_per_municipality);
    (0..n_faces)
        .map(|k| {
            let n_vertices = rng.random_range(2..=4);
            let mut p = (
                centre.0 + rng.random_range(-0.05..0.05),
                centre.1 + rng.random_range(-0.05..0.05),
            );
            let mut vertices = vec![p];
            for _ in 1..n_vertices {
                p = (
                    p.0 + rng.random_range(-0.001..0.001),
                    p.1 + rng.random_range(-0.001..0.001),
                );
                vertices.push(p);
            }
            let own = cep_base + rng.random_range(0..n_ceps);
            let other = (n_ceps > 1 && rng.random_bool(spec.multi_cep_face_fraction))
                .then(|| cep_base + (own - cep_base + 1) % n_ceps);
            let mut addresses = BTreeMap::new();
            for (i, &max) in spec.species_max.iter().enumerate() {
                let species = i as u8 + 1;
                for cep in std::iter::once(own).chain(other) {
                    let n = rng.random_range(0..=max);
                    if n > 0 {
                        *addresses.entry((cep, species)).or_default() += n;
                    }
                }
            }
            Face {
                code: format!("{geocode}{:014}", u64::from(k) + 1),
                vertices,
                addresses,
            }
        })
        .collect()
}

fn make_establishments<R: Rng>(
    spec: &SyntheticSpec,
    rng: &mut R,
    geocode: &str,
    cep_base: u32,
    n_ceps: u32,
) -> Vec<Establishment> {
    let n = sample(rng, spec.establishments_per_municipality);
    (0..n)
        .map(|k| {
            let cep = if rng.random_bool(spec.orphan_cep_fraction) {
                cep_base + n_ceps
            } else {
                cep_base + rng.random_range(0..n_ceps)
            };
            Establishment {
                id: format!("{geocode}{k:06}"),
                cep,
                activity: rng.random_range(0..ACTIVITIES.len()),
                jobs: rng.random_range(spec.jobs[0]..=spec.jobs[1]),
            }
        })
        .collect()
}

type TruthRows = BTreeMap<(String, u32), (BigRational, u64)>;

/// Straightforward per-establishment allocation of one municipality.
/// Returns the expected (face, CEP) rows and the unallocated jobs.
fn oracle(faces: &[Face], establishments: &[Establishment]) -> (TruthRows, u64) {
    let mut rows = TruthRows::new();
    let mut unallocated = 0;
    for e in establishments {
        if e.jobs == 0 {
            continue;
        }
        if faces.is_empty() {
            unallocated += e.jobs;
            continue;
        }
        let species = COMPATIBLE_SPECIES[e.activity];
        let on_cep: Vec<&Face> = faces
            .iter()
            .filter(|f| f.addresses.keys().any(|&(c, _)| c == e.cep))
            .collect();
        // (face, weight, row CEP)
        let mut shares: Vec<(&Face, u64, u32)> = if on_cep.is_empty() {
            faces
                .iter()
                .map(|f| {
                    let w = f
                        .addresses
                        .iter()
                        .filter(|((_, s), _)| *s == species)
                        .map(|(_, &n)| u64::from(n))
                        .sum();
                    (f, w, primary_cep(f).unwrap_or(e.cep))
                })
                .collect()
        } else {
            on_cep
                .into_iter()
                .map(|f| {
                    (
                        f,
                        u64::from(*f.addresses.get(&(e.cep, species)).unwrap_or(&0)),
                        e.cep,
                    )
                })
                .collect()
        };
        if shares.iter().all(|s| s.1 == 0) {
            for s in &mut shares {
                s.1 = 1;
            }
        }
        let total: u64 = shares.iter().map(|s| s.1).sum();
        for (f, w, cep) in shares {
            if w == 0 {
                continue;
            }
            let amount = BigRational::new(BigInt::from(e.jobs * w), BigInt::from(total));
            let row = rows
                .entry((f.code.clone(), cep))
                .or_insert_with(|| (BigRational::zero(), 0));
            row.0 += amount;
            row.1 += 1;
        }
    }
    (rows, unallocated)
}

/// CEP with the most addresses on the face; ties go to the lower CEP.
fn primary_cep(face: &Face) -> Option<u32> {
    let mut per_cep: BTreeMap<u32, u64> = BTreeMap::new();
    for (&(cep, _), &n) in &face.addresses {
        *per_cep.entry(cep).or_default() += u64::from(n);
    }
    per_cep
        .into_iter()
        .rev()
        .max_by_key(|&(_, n)| n)
        .map(|(c, _)| c)
}
