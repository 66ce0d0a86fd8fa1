use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The seven address species of the national address register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum SpeciesCategory {
    PrivateHousehold = 1,
    CollectiveHousehold = 2,
    Agricultural = 3,
    Educational = 4,
    Health = 5,
    OtherPurpose = 6,
    UnderConstruction = 7,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown address species {0:?} (expected 1..=7)")]
pub struct UnknownSpecies(pub String);

impl SpeciesCategory {
    pub const ALL: [SpeciesCategory; 7] = [
        SpeciesCategory::PrivateHousehold,
        SpeciesCategory::CollectiveHousehold,
        SpeciesCategory::Agricultural,
        SpeciesCategory::Educational,
        SpeciesCategory::Health,
        SpeciesCategory::OtherPurpose,
        SpeciesCategory::UnderConstruction,
    ];

    /// Species counted in the `non residencial` output column.
    pub const NON_RESIDENTIAL: [SpeciesCategory; 4] = [
        SpeciesCategory::Agricultural,
        SpeciesCategory::Educational,
        SpeciesCategory::Health,
        SpeciesCategory::OtherPurpose,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<SpeciesCategory> {
        match code {
            1..=7 => Some(Self::ALL[usize::from(code) - 1]),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpeciesCategory::PrivateHousehold => "private household",
            SpeciesCategory::CollectiveHousehold => "collective household",
            SpeciesCategory::Agricultural => "agricultural establishment",
            SpeciesCategory::Educational => "educational establishment",
            SpeciesCategory::Health => "health establishment",
            SpeciesCategory::OtherPurpose => "other-purpose establishment",
            SpeciesCategory::UnderConstruction => "under construction",
        }
    }

    pub fn is_non_residential(self) -> bool {
        Self::NON_RESIDENTIAL.contains(&self)
    }

    /// Bit used by [`SpeciesSet`].
    fn bit(self) -> u8 {
        1 << (self.code() - 1)
    }
}

impl TryFrom<u8> for SpeciesCategory {
    type Error = UnknownSpecies;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        SpeciesCategory::from_code(code).ok_or_else(|| UnknownSpecies(code.to_string()))
    }
}

impl From<SpeciesCategory> for u8 {
    fn from(s: SpeciesCategory) -> u8 {
        s.code()
    }
}

impl FromStr for SpeciesCategory {
    type Err = UnknownSpecies;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .parse::<u8>()
            .ok()
            .and_then(SpeciesCategory::from_code)
            .ok_or_else(|| UnknownSpecies(s.to_string()))
    }
}

impl fmt::Display for SpeciesCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Compact set of species, used as the image of a sector in the
/// compatibility matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpeciesSet(u8);

impl SpeciesSet {
    pub fn empty() -> Self {
        SpeciesSet(0)
    }

    pub fn insert(&mut self, s: SpeciesCategory) {
        self.0 |= s.bit();
    }

    pub fn contains(self, s: SpeciesCategory) -> bool {
        self.0 & s.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = SpeciesCategory> {
        SpeciesCategory::ALL
            .into_iter()
            .filter(move |s| self.contains(*s))
    }
}

impl FromIterator<SpeciesCategory> for SpeciesSet {
    fn from_iter<I: IntoIterator<Item = SpeciesCategory>>(iter: I) -> Self {
        let mut set = SpeciesSet::empty();
        for s in iter {
            set.insert(s);
        }
        set
    }
}

/// Establishment sector, as far as address-species compatibility goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SectorClass {
    Education,
    Health,
    Agriculture,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown sector class {0:?}")]
pub struct UnknownSector(pub String);

impl SectorClass {
    pub const ALL: [SectorClass; 4] = [
        SectorClass::Education,
        SectorClass::Health,
        SectorClass::Agriculture,
        SectorClass::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SectorClass::Education => "Education",
            SectorClass::Health => "Health",
            SectorClass::Agriculture => "Agriculture",
            SectorClass::Other => "Other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for SectorClass {
    type Err = UnknownSector;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SectorClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownSector(s.to_string()))
    }
}

impl fmt::Display for SectorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SectorConfigError {
    #[error("empty activity prefix")]
    EmptyPrefix,
    #[error("activity prefix {0:?} must be alphanumeric")]
    BadPrefix(String),
    #[error("activity prefix {0:?} listed more than once")]
    DuplicatePrefix(String),
}

/// Prefix table from establishment activity codes to sectors.
///
/// Activity codes are compared after removing the punctuation usually found
/// in printed classification codes (`.`, `-`, `/` and spaces), so
/// `"8513-9/00"` and `"8513900"` match the same prefixes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SectorMappingConfig {
    prefixes: BTreeMap<String, SectorClass>,
    longest: usize,
}

#[derive(Deserialize)]
struct SectorFile {
    #[serde(default)]
    prefixes: BTreeMap<String, SectorClass>,
}

fn strip_activity(raw: &str) -> String {
    raw.chars()
        .filter(|c| !matches!(c, '.' | '-' | '/' | ' ' | '\t'))
        .collect()
}

impl SectorMappingConfig {
    pub fn new<I, S>(entries: I) -> Result<Self, SectorConfigError>
    where
        I: IntoIterator<Item = (S, SectorClass)>,
        S: AsRef<str>,
    {
        let mut prefixes = BTreeMap::new();
        for (raw, class) in entries {
            let prefix = strip_activity(raw.as_ref());
            if prefix.is_empty() {
                return Err(SectorConfigError::EmptyPrefix);
            }
            if !prefix.chars().all(|c| c.is_ascii_alphanumeric()) {
                return Err(SectorConfigError::BadPrefix(raw.as_ref().to_string()));
            }
            if prefixes.insert(prefix, class).is_some() {
                return Err(SectorConfigError::DuplicatePrefix(raw.as_ref().to_string()));
            }
        }
        let longest = prefixes.keys().map(String::len).max().unwrap_or(0);
        Ok(SectorMappingConfig { prefixes, longest })
    }

    /// Parses a TOML document with a `[prefixes]` table of `"code" = "Sector"`.
    pub fn from_toml(text: &str) -> Result<Self, crate::Error> {
        let file: SectorFile = toml::from_str(text)
            .map_err(|e| crate::Error::Config(format!("sector mapping: {e}")))?;
        SectorMappingConfig::new(file.prefixes)
            .map_err(|e| crate::Error::Config(format!("sector mapping: {e}")))
    }

    pub fn len(&self) -> usize {
        self.prefixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes.is_empty()
    }

    /// Sector of the longest matching prefix, `Other` when nothing matches.
    pub fn sector_of(&self, raw_activity_code: &str) -> SectorClass {
        let code = strip_activity(raw_activity_code);
        let max = self.longest.min(code.len());
        (1..=max)
            .rev()
            .filter(|&n| code.is_char_boundary(n))
            .find_map(|n| self.prefixes.get(&code[..n]).copied())
            .unwrap_or(SectorClass::Other)
    }
}
