use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::Zero;

use super::{AllocationRule, Cep, FaceCode, Geocode, Jobs};
use crate::ingest::IngestStats;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct UnallocatedEntry {
    pub establishment_id: String,
    pub municipality: Geocode,
    pub cep: Cep,
    pub jobs: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MunicipalityTotals {
    pub input: u64,
    pub allocated: Jobs,
    pub unallocated: u64,
    pub faces: u64,
    pub establishments: u64,
    pub single_cep: bool,
}

impl Default for MunicipalityTotals {
    fn default() -> Self {
        MunicipalityTotals {
            input: 0,
            allocated: BigRational::zero(),
            unallocated: 0,
            faces: 0,
            establishments: 0,
            single_cep: false,
        }
    }
}

/// Totals and ledgers for one run. Partial reports from independent
/// partitions combine with [`RunReport::merge`], which commutes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub input_jobs_total: u64,
    pub allocated_jobs_total: Jobs,
    pub unallocated: Vec<UnallocatedEntry>,
    pub rule_histogram: BTreeMap<AllocationRule, u64>,
    pub per_municipality_totals: BTreeMap<Geocode, MunicipalityTotals>,
    /// Reader statistics keyed by input name (`faces`, `species`, `establishments`).
    pub ingest: BTreeMap<String, IngestStats>,
    /// Accepted establishment rows dropped by the year or municipality filter.
    pub establishments_filtered: u64,
    pub zero_job_establishments: u64,
    /// Faces whose geometry had no usable length; their first vertex was used.
    pub degenerate_faces: Vec<FaceCode>,
    /// Faces whose representative point fell outside the configured bounding box.
    pub coordinate_warnings: Vec<FaceCode>,
    /// Faces present in the species input but missing from the geometry input.
    pub species_faces_without_geometry: u64,
    pub species_rows_without_geometry: u64,
    pub failed_municipalities: BTreeMap<Geocode, String>,
    pub rows_written: u64,
}

impl Default for RunReport {
    fn default() -> Self {
        RunReport {
            input_jobs_total: 0,
            allocated_jobs_total: BigRational::zero(),
            unallocated: Vec::new(),
            rule_histogram: AllocationRule::ALL.iter().map(|r| (*r, 0)).collect(),
            per_municipality_totals: BTreeMap::new(),
            ingest: BTreeMap::new(),
            establishments_filtered: 0,
            zero_job_establishments: 0,
            degenerate_faces: Vec::new(),
            coordinate_warnings: Vec::new(),
            species_faces_without_geometry: 0,
            species_rows_without_geometry: 0,
            failed_municipalities: BTreeMap::new(),
            rows_written: 0,
        }
    }
}

impl RunReport {
    pub fn unallocated_jobs_total(&self) -> u64 {
        self.unallocated.iter().map(|u| u.jobs).sum()
    }

    /// input = allocated + unallocated, exactly.
    pub fn is_conserved(&self) -> bool {
        BigRational::from_integer(self.input_jobs_total.into())
            == &self.allocated_jobs_total
                + BigRational::from_integer(self.unallocated_jobs_total().into())
    }

    pub fn establishments_total(&self) -> u64 {
        self.rule_histogram.values().sum()
    }

    pub fn merge(&mut self, other: RunReport) {
        self.input_jobs_total += other.input_jobs_total;
        self.allocated_jobs_total += other.allocated_jobs_total;
        self.unallocated.extend(other.unallocated);
        for (rule, n) in other.rule_histogram {
            *self.rule_histogram.entry(rule).or_default() += n;
        }
        for (g, t) in other.per_municipality_totals {
            let e = self.per_municipality_totals.entry(g).or_default();
            e.input += t.input;
            e.allocated += t.allocated;
            e.unallocated += t.unallocated;
            e.faces += t.faces;
            e.establishments += t.establishments;
            e.single_cep |= t.single_cep;
        }
        for (name, stats) in other.ingest {
            self.ingest.entry(name).or_default().merge(stats);
        }
        self.establishments_filtered += other.establishments_filtered;
        self.zero_job_establishments += other.zero_job_establishments;
        self.degenerate_faces.extend(other.degenerate_faces);
        self.coordinate_warnings.extend(other.coordinate_warnings);
        self.species_faces_without_geometry += other.species_faces_without_geometry;
        self.species_rows_without_geometry += other.species_rows_without_geometry;
        self.failed_municipalities
            .extend(other.failed_municipalities);
        self.rows_written += other.rows_written;
        self.normalize();
    }

    /// Puts every list in canonical order.
    pub fn normalize(&mut self) {
        self.unallocated.sort();
        self.degenerate_faces.sort();
        self.coordinate_warnings.sort();
    }
}
