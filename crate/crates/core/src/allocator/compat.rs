use std::collections::BTreeMap;

use crate::model::{SectorClass, SpeciesCategory, SpeciesSet};
use crate::Error;

/// Address species that may host each sector's jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompatibilityMatrix {
    compatible: [SpeciesSet; 4],
}

impl Default for CompatibilityMatrix {
    /// Education→4, Health→5, Agriculture→3, Other→6. Residential species
    /// and buildings under construction host no jobs.
    fn default() -> Self {
        let one = |s| [s].into_iter().collect::<SpeciesSet>();
        CompatibilityMatrix {
            compatible: [
                one(SpeciesCategory::Educational),
                one(SpeciesCategory::Health),
                one(SpeciesCategory::Agricultural),
                one(SpeciesCategory::OtherPurpose),
            ],
        }
    }
}

impl CompatibilityMatrix {
    /// Default matrix with the given sectors replaced. Each override needs at
    /// least one species code in 1..=7.
    pub fn with_overrides(overrides: &BTreeMap<SectorClass, Vec<u8>>) -> Result<Self, Error> {
        let mut m = CompatibilityMatrix::default();
        for (sector, codes) in overrides {
            let set = codes
                .iter()
                .map(|&c| {
                    SpeciesCategory::from_code(c).ok_or_else(|| {
                        Error::Config(format!("compatibility for {sector}: unknown species {c}"))
                    })
                })
                .collect::<Result<SpeciesSet, _>>()?;
            if set.is_empty() {
                return Err(Error::Config(format!(
                    "compatibility for {sector} is empty"
                )));
            }
            m.compatible[sector.index()] = set;
        }
        Ok(m)
    }

    pub fn compatible(&self, sector: SectorClass) -> SpeciesSet {
        self.compatible[sector.index()]
    }
}
