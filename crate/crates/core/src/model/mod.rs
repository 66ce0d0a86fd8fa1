//! Domain vocabulary shared by every stage of the pipeline.

mod cep;
mod face;
mod record;
mod report;
mod species;

pub use cep::{normalize_cep, Cep, CepError};
pub use face::{
    AddressTally, CodeError, Coord, FaceCode, FaceGeometry, Geocode, GeometryError, StreetFace,
};
pub use record::{
    Allocation, AllocationRule, EstablishmentRecord, JobPoint, Jobs, FIRST_YEAR_WITH_CEP,
};
pub use report::{MunicipalityTotals, RunReport, UnallocatedEntry};
pub use species::{
    SectorClass, SectorConfigError, SectorMappingConfig, SpeciesCategory, SpeciesSet,
    UnknownSector, UnknownSpecies,
};
