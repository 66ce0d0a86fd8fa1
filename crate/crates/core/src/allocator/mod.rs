//! Job allocation from establishments to street faces.
//!
//! An establishment's jobs go to the faces of its municipality that carry
//! addresses under the establishment's CEP, in proportion to each face's
//! count of addresses whose species is compatible with the establishment's
//! sector. Fallbacks, in order:
//!
//! * no compatible address under the CEP: equal split over the CEP's faces;
//! * CEP absent from the face data: the same weighted rule over every face
//!   of the municipality (equal split if no face has a compatible address);
//! * municipality without faces: the jobs are reported as unallocated.
//!
//! All quantities are exact rationals.

mod compat;
mod index;
mod partition;
mod rounding;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::model::{
    Allocation, AllocationRule, Cep, EstablishmentRecord, FaceCode, Jobs, SpeciesCategory,
};

pub use compat::CompatibilityMatrix;
pub use index::{build_index, CepIndex, FaceId};
pub use partition::{allocate_partition, PartitionOutput, PartitionRow};
pub use rounding::{largest_remainder, round_to_integers, RoundingMode};

/// Per-face weights for one establishment, ascending by face code.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WeightVector {
    pub entries: Vec<(FaceId, u64)>,
}

impl WeightVector {
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no face carries addresses under CEP {cep} in municipality {municipality}")]
pub struct CepNotIndexed {
    pub cep: Cep,
    pub municipality: crate::model::Geocode,
}

/// Compatible-species address counts, under the establishment's CEP, of each
/// face indexed under that CEP.
pub fn weights_for(
    e: &EstablishmentRecord,
    index: &CepIndex,
    matrix: &CompatibilityMatrix,
) -> Result<WeightVector, CepNotIndexed> {
    let faces = index
        .faces_for_cep(&e.municipality, &e.cep)
        .ok_or(CepNotIndexed {
            cep: e.cep,
            municipality: e.municipality,
        })?;
    let species = matrix.compatible(e.sector);
    let entries = faces
        .iter()
        .map(|&id| (id, index.face(id).tally.sum_species(e.cep, species.iter())))
        .collect();
    Ok(WeightVector { entries })
}

/// `jobs · w_i / Σw`, or `jobs / n` for every entry when all weights are zero.
/// Returns the amounts and whether the weighted branch applied.
pub fn proportional_split(jobs: u64, weights: &[u64]) -> (Vec<Jobs>, bool) {
    let total: u64 = weights.iter().sum();
    let jobs = BigInt::from(jobs);
    if total > 0 {
        let denom = BigInt::from(total);
        let amounts = weights
            .iter()
            .map(|&w| BigRational::new(&jobs * BigInt::from(w), denom.clone()))
            .collect();
        (amounts, true)
    } else {
        let n = BigInt::from(weights.len());
        let share = BigRational::new(jobs, n);
        (vec![share; weights.len()], false)
    }
}

/// Splits `e.jobs` over the faces of `w`. Weighted when the weights sum to
/// something positive, uniform otherwise. Panics on an empty vector.
pub fn allocate(e: &EstablishmentRecord, w: &WeightVector, index: &CepIndex) -> Vec<Allocation> {
    assert!(!w.is_empty(), "allocate needs at least one face");
    let weights: Vec<u64> = w.entries.iter().map(|(_, x)| *x).collect();
    let (amounts, weighted) = proportional_split(e.jobs, &weights);
    let rule = if weighted {
        AllocationRule::WeightedBySpecies
    } else {
        AllocationRule::UniformOverCepFaces
    };
    w.entries
        .iter()
        .zip(amounts)
        .map(|(&(id, _), amount)| Allocation {
            establishment_id: e.establishment_id.clone(),
            face_code: Some(index.face(id).face_code.clone()),
            cep: e.cep,
            amount,
            rule,
        })
        .collect()
}

/// Municipality-wide weights: compatible-species counts summed over every
/// CEP of each face.
pub fn municipality_weights(
    e: &EstablishmentRecord,
    index: &CepIndex,
    matrix: &CompatibilityMatrix,
) -> Option<WeightVector> {
    let faces = index.faces_for_municipality(&e.municipality)?;
    let species = matrix.compatible(e.sector);
    let entries = faces
        .iter()
        .map(|&id| (id, index.face(id).tally.sum_species_all_ceps(species)))
        .collect();
    Some(WeightVector { entries })
}

/// CEP of the output row a municipality-wide share lands in.
pub(crate) fn fallback_row_cep(index: &CepIndex, id: FaceId, establishment_cep: Cep) -> Cep {
    index
        .face(id)
        .tally
        .primary_cep()
        .unwrap_or(establishment_cep)
}

/// Allocation for an establishment whose CEP has no faces.
pub fn allocate_fallback(
    e: &EstablishmentRecord,
    index: &CepIndex,
    matrix: &CompatibilityMatrix,
) -> Vec<Allocation> {
    let Some(w) = municipality_weights(e, index, matrix) else {
        return vec![Allocation {
            establishment_id: e.establishment_id.clone(),
            face_code: None,
            cep: e.cep,
            amount: BigRational::from_integer(e.jobs.into()),
            rule: AllocationRule::Unallocated,
        }];
    };
    let weights: Vec<u64> = w.entries.iter().map(|(_, x)| *x).collect();
    let (amounts, _) = proportional_split(e.jobs, &weights);
    w.entries
        .iter()
        .zip(amounts)
        .map(|(&(id, _), amount)| Allocation {
            establishment_id: e.establishment_id.clone(),
            face_code: Some(index.face(id).face_code.clone()),
            cep: fallback_row_cep(index, id, e.cep),
            amount,
            rule: AllocationRule::MunicipalityWide,
        })
        .collect()
}

/// Full allocation of one establishment, choosing the rule.
pub fn allocate_establishment(
    e: &EstablishmentRecord,
    index: &CepIndex,
    matrix: &CompatibilityMatrix,
) -> Vec<Allocation> {
    match weights_for(e, index, matrix) {
        Ok(w) => allocate(e, &w, index),
        Err(CepNotIndexed { .. }) => allocate_fallback(e, index, matrix),
    }
}

/// Output row before its representative point is attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingRow {
    pub face_code: FaceCode,
    pub cep: Cep,
    pub non_residential: u64,
    pub jobs: Jobs,
}

/// `non residencial` column: species 3 to 6 under the row's CEP.
pub fn non_residential(index: &CepIndex, id: FaceId, cep: Cep) -> u64 {
    index
        .face(id)
        .tally
        .sum_species(cep, SpeciesCategory::NON_RESIDENTIAL)
}

/// Sums allocations per (face, CEP). Rows with zero jobs are dropped and the
/// result is ordered by face code, then CEP.
pub fn aggregate<'a, I>(allocations: I, index: &CepIndex) -> Vec<PendingRow>
where
    I: IntoIterator<Item = &'a Allocation>,
{
    let mut sums: std::collections::BTreeMap<(FaceId, Cep), Jobs> = Default::default();
    for a in allocations {
        let Some(code) = &a.face_code else { continue };
        let id = index
            .find(code)
            .expect("allocation refers to an indexed face");
        *sums.entry((id, a.cep)).or_insert_with(BigRational::zero) += &a.amount;
    }
    sums.into_iter()
        .filter(|(_, jobs)| !jobs.is_zero())
        .map(|((id, cep), jobs)| PendingRow {
            face_code: index.face(id).face_code.clone(),
            cep,
            non_residential: non_residential(index, id, cep),
            jobs,
        })
        .collect()
}
