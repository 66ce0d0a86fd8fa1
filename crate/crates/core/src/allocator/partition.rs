//! Allocation of a whole partition at once.
//!
//! In fractional mode the rows only depend on the total jobs sent to each
//! (target face set, compatible species) pair, so establishments are summed
//! per target first and each target's face list is walked once. Amounts are
//! accumulated as integer numerators over the target's weight total and only
//! turned into reduced rationals per output row.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::{
    fallback_row_cep, largest_remainder, non_residential, CepIndex, CompatibilityMatrix, FaceId,
    RoundingMode,
};
use crate::model::{
    AllocationRule, Cep, EstablishmentRecord, Geocode, Jobs, RunReport, SpeciesSet,
    UnallocatedEntry,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Target {
    Cep(Geocode, Cep, SpeciesSet),
    /// The establishment CEP is kept because it names the row of faces
    /// without any address.
    Municipality(Geocode, SpeciesSet, Cep),
}

struct Plan {
    /// (face, weight, row CEP); weights already replaced by 1 when uniform.
    entries: Vec<(FaceId, u64, Cep)>,
    total: u64,
    rule: AllocationRule,
}

fn plan(target: Target, index: &CepIndex) -> Plan {
    let (entries, rule): (Vec<(FaceId, u64, Cep)>, _) = match target {
        Target::Cep(g, cep, species) => {
            let faces = index
                .faces_for_cep(&g, &cep)
                .expect("target built from the index");
            let entries = faces
                .iter()
                .map(|&id| {
                    (
                        id,
                        index.face(id).tally.sum_species(cep, species.iter()),
                        cep,
                    )
                })
                .collect::<Vec<_>>();
            let weighted = entries.iter().any(|e| e.1 > 0);
            let rule = if weighted {
                AllocationRule::WeightedBySpecies
            } else {
                AllocationRule::UniformOverCepFaces
            };
            (entries, rule)
        }
        Target::Municipality(g, species, cep) => {
            let faces = index
                .faces_for_municipality(&g)
                .expect("target built from the index");
            let entries = faces
                .iter()
                .map(|&id| {
                    let w = index.face(id).tally.sum_species_all_ceps(species);
                    (id, w, fallback_row_cep(index, id, cep))
                })
                .collect();
            (entries, AllocationRule::MunicipalityWide)
        }
    };
    let mut entries = entries;
    if entries.iter().all(|e| e.1 == 0) {
        for e in &mut entries {
            e.1 = 1;
        }
    }
    let total = entries.iter().map(|e| e.1).sum();
    Plan {
        entries,
        total,
        rule,
    }
}

/// Output rows of one partition, in ascending (face code, CEP) order.
#[derive(Debug, Clone, Default)]
pub struct PartitionOutput {
    pub rows: Vec<PartitionRow>,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionRow {
    pub face: FaceId,
    pub cep: Cep,
    pub non_residential: u64,
    pub jobs: Jobs,
}

/// Sum of fractions kept as numerators per denominator.
#[derive(Default)]
struct Accumulator(Vec<(u64, u128)>);

impl Accumulator {
    fn add(&mut self, denom: u64, num: u128) {
        match self.0.iter_mut().find(|(d, _)| *d == denom) {
            Some((_, n)) => *n += num,
            None => self.0.push((denom, num)),
        }
    }

    fn value(&self) -> Jobs {
        self.0
            .iter()
            .map(|&(d, n)| BigRational::new(BigInt::from(n), BigInt::from(d)))
            .fold(BigRational::zero(), |acc, x| acc + x)
    }
}

/// Allocates every establishment against `index` and aggregates the result
/// per (face, CEP), filling the partition's share of the run report.
pub fn allocate_partition<'a, I>(
    index: &CepIndex,
    establishments: I,
    matrix: &CompatibilityMatrix,
    rounding: RoundingMode,
) -> PartitionOutput
where
    I: IntoIterator<Item = &'a EstablishmentRecord>,
{
    let mut report = RunReport::default();
    for g in index.municipalities() {
        let t = report.per_municipality_totals.entry(*g).or_default();
        t.faces = index
            .faces_for_municipality(g)
            .map_or(0, |f| f.len() as u64);
        t.single_cep = index.is_single_cep(g);
    }

    let mut plans: HashMap<Target, Plan> = HashMap::new();
    let mut group_jobs: BTreeMap<Target, u64> = BTreeMap::new();
    let mut acc: HashMap<(FaceId, Cep), Accumulator> = HashMap::new();

    for e in establishments {
        report.input_jobs_total += e.jobs;
        let totals = report
            .per_municipality_totals
            .entry(e.municipality)
            .or_default();
        totals.input += e.jobs;
        totals.establishments += 1;

        let species = matrix.compatible(e.sector);
        let target = if index.faces_for_cep(&e.municipality, &e.cep).is_some() {
            Target::Cep(e.municipality, e.cep, species)
        } else if index.faces_for_municipality(&e.municipality).is_some() {
            Target::Municipality(e.municipality, species, e.cep)
        } else {
            totals.unallocated += e.jobs;
            *report
                .rule_histogram
                .entry(AllocationRule::Unallocated)
                .or_default() += 1;
            if e.jobs == 0 {
                report.zero_job_establishments += 1;
            } else {
                report.unallocated.push(UnallocatedEntry {
                    establishment_id: e.establishment_id.clone(),
                    municipality: e.municipality,
                    cep: e.cep,
                    jobs: e.jobs,
                    reason: "municipality has no faces".to_string(),
                });
            }
            continue;
        };
        let plan = plans.entry(target).or_insert_with(|| plan(target, index));
        *report.rule_histogram.entry(plan.rule).or_default() += 1;
        if e.jobs == 0 {
            report.zero_job_establishments += 1;
            continue;
        }
        match rounding {
            RoundingMode::Fractional => *group_jobs.entry(target).or_default() += e.jobs,
            RoundingMode::LargestRemainder => {
                let weights: Vec<u64> = plan.entries.iter().map(|x| x.1).collect();
                let shares = largest_remainder(e.jobs, &weights);
                for (&(id, _, cep), share) in plan.entries.iter().zip(shares) {
                    if share > 0 {
                        acc.entry((id, cep)).or_default().add(1, u128::from(share));
                    }
                }
            }
        }
    }

    for (target, jobs) in &group_jobs {
        let plan = &plans[target];
        for &(id, w, cep) in &plan.entries {
            if w > 0 {
                acc.entry((id, cep))
                    .or_default()
                    .add(plan.total, u128::from(*jobs) * u128::from(w));
            }
        }
    }

    let mut keys: Vec<(FaceId, Cep)> = acc.keys().copied().collect();
    keys.sort_unstable();
    let mut rows = Vec::with_capacity(keys.len());
    for (id, cep) in keys {
        let jobs = acc[&(id, cep)].value();
        if jobs.is_zero() {
            continue;
        }
        let municipality = index.face(id).municipality;
        let totals = report
            .per_municipality_totals
            .entry(municipality)
            .or_default();
        totals.allocated += &jobs;
        report.allocated_jobs_total += &jobs;
        rows.push(PartitionRow {
            face: id,
            cep,
            non_residential: non_residential(index, id, cep),
            jobs,
        });
    }
    report.normalize();
    PartitionOutput { rows, report }
}
