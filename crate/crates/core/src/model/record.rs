use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::{Cep, FaceCode, Geocode, SectorClass};

/// Exact job quantity. Decimal conversion only happens on export.
pub type Jobs = BigRational;

/// Earliest year whose establishment register carries postal codes.
pub const FIRST_YEAR_WITH_CEP: u16 = 2014;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstablishmentRecord {
    pub establishment_id: String,
    pub municipality: Geocode,
    pub cep: Cep,
    pub sector: SectorClass,
    pub jobs: u64,
    pub year: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AllocationRule {
    WeightedBySpecies,
    UniformOverCepFaces,
    MunicipalityWide,
    Unallocated,
}

impl AllocationRule {
    pub const ALL: [AllocationRule; 4] = [
        AllocationRule::WeightedBySpecies,
        AllocationRule::UniformOverCepFaces,
        AllocationRule::MunicipalityWide,
        AllocationRule::Unallocated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AllocationRule::WeightedBySpecies => "WeightedBySpecies",
            AllocationRule::UniformOverCepFaces => "UniformOverCepFaces",
            AllocationRule::MunicipalityWide => "MunicipalityWide",
            AllocationRule::Unallocated => "Unallocated",
        }
    }
}

impl fmt::Display for AllocationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Share of one establishment's jobs placed on one face.
///
/// `cep` is the postal code of the output row the share lands in: the
/// establishment's own CEP when it matched the face, otherwise the face's
/// primary CEP. `face_code` is `None` only for `Unallocated`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub establishment_id: String,
    pub face_code: Option<FaceCode>,
    pub cep: Cep,
    pub amount: Jobs,
    pub rule: AllocationRule,
}

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct JobPoint {
    pub face_code: FaceCode,
    pub cep: Cep,
    pub non_residential: u64,
    pub jobs: Jobs,
    pub lon: f64,
    pub lat: f64,
}
