//! Comparison of a run's job-point CSV with a ground-truth ledger.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::allocator::RoundingMode;
use crate::export::{format_jobs, parse_exact, read_csv};
use crate::pipeline::CSV_FILE;
use crate::synth::TRUTH_HEADER;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub face_code: String,
    pub cep: String,
    pub expected: String,
    pub actual: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "face {} CEP {}: expected {}, got {}",
            self.face_code, self.cep, self.expected, self.actual
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Verdict {
    pub rows_compared: u64,
    pub mismatches: Vec<Mismatch>,
    /// Integer mode only: the run total differs from the ledger total.
    pub total_mismatch: Option<(String, String)>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.total_mismatch.is_none()
    }
}

struct TruthRow {
    jobs: BigRational,
    contributors: u64,
}

fn read_truth(path: &Path) -> Result<BTreeMap<(String, String), TruthRow>, Error> {
    let file = File::open(path).map_err(|e| Error::input(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next().transpose()? {
        Some(h) if h == TRUTH_HEADER => {}
        _ => {
            return Err(Error::Format(format!(
                "{} is not a truth ledger",
                path.display()
            )))
        }
    }
    let mut rows = BTreeMap::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("bad truth line {line:?}"));
        let f: Vec<&str> = line.split(',').collect();
        let [code, cep, jobs, contributors] = f[..] else {
            return Err(bad());
        };
        rows.insert(
            (code.to_string(), cep.to_string()),
            TruthRow {
                jobs: parse_exact(jobs).ok_or_else(bad)?,
                contributors: contributors.parse().map_err(|_| bad())?,
            },
        );
    }
    Ok(rows)
}

/// Job-point CSVs of a run directory: the combined file, or every
/// per-municipality file when there is none.
pub fn output_csvs(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let combined = dir.join(CSV_FILE);
    if combined.is_file() {
        return Ok(vec![combined]);
    }
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::input(dir, e))? {
        let p = entry?.path().join(CSV_FILE);
        if p.is_file() {
            found.push(p);
        }
    }
    if found.is_empty() {
        return Err(Error::Format(format!(
            "no {CSV_FILE} under {}",
            dir.display()
        )));
    }
    found.sort();
    Ok(found)
}

/// Compares the run in `output_dir` with `truth`, row by (face, CEP) row.
///
/// Fractional runs must reproduce every ledger value at the CSV's printed
/// precision. Integer runs must keep the ledger total exactly and stay within
/// one job per contributing establishment on every row.
pub fn verify(output_dir: &Path, truth: &Path, mode: RoundingMode) -> Result<Verdict, Error> {
    let expected = read_truth(truth)?;
    let mut actual: BTreeMap<(String, String), String> = BTreeMap::new();
    for path in output_csvs(output_dir)? {
        let file = File::open(&path).map_err(|e| Error::input(&path, e))?;
        for row in read_csv(BufReader::new(file))? {
            actual.insert((row.face_code, row.cep), row.jobs);
        }
    }

    let mut verdict = Verdict::default();
    let mut keys: Vec<&(String, String)> = expected.keys().chain(actual.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut expected_total = BigRational::zero();
    let mut actual_total = BigRational::zero();
    for key in keys {
        verdict.rows_compared += 1;
        let want = expected.get(key);
        let got = actual.get(key);
        let ok = match mode {
            RoundingMode::Fractional => {
                want.map(|t| format_jobs(&t.jobs)).as_deref() == got.map(String::as_str)
            }
            RoundingMode::LargestRemainder => {
                let frac = want.map_or_else(BigRational::zero, |t| t.jobs.clone());
                let bound = want.map_or(0, |t| t.contributors);
                expected_total += &frac;
                match got.map(|g| g.parse::<u64>()) {
                    Some(Err(_)) => false,
                    Some(Ok(n)) => {
                        let n = BigRational::from_integer(n.into());
                        actual_total += &n;
                        (n - frac).abs() < BigRational::from_integer(bound.into())
                    }
                    None => frac.abs() < BigRational::from_integer(bound.into()),
                }
            }
        };
        if !ok {
            verdict.mismatches.push(Mismatch {
                face_code: key.0.clone(),
                cep: key.1.clone(),
                expected: want.map_or_else(|| "nothing".into(), |t| format_jobs(&t.jobs)),
                actual: got.cloned().unwrap_or_else(|| "nothing".into()),
            });
        }
    }
    if mode == RoundingMode::LargestRemainder && expected_total != actual_total {
        verdict.total_mismatch = Some((format_jobs(&expected_total), format_jobs(&actual_total)));
    }
    Ok(verdict)
}
