use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::{Cep, SpeciesCategory};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error("face code {0:?} must be 15 to 25 digits")]
    BadFaceCode(String),
    #[error("municipality geocode {0:?} must be exactly 7 digits")]
    BadGeocode(String),
}

/// Street-face identifier. Opaque: compared and ordered as a digit string.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FaceCode(Arc<str>);

impl FaceCode {
    pub const MIN_LEN: usize = 15;
    pub const MAX_LEN: usize = 25;

    pub fn new(raw: &str) -> Result<FaceCode, CodeError> {
        let s = raw.trim();
        if !(Self::MIN_LEN..=Self::MAX_LEN).contains(&s.len())
            || !s.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(CodeError::BadFaceCode(raw.to_string()));
        }
        Ok(FaceCode(Arc::from(s)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First seven digits read as a municipality geocode. Only meaningful
    /// when the face dataset is known to embed the geocode in its codes.
    pub fn municipality_prefix(&self) -> Geocode {
        Geocode::new(&self.0[..7]).expect("face codes have at least 15 digits")
    }
}

impl FromStr for FaceCode {
    type Err = CodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaceCode::new(s)
    }
}

impl fmt::Display for FaceCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for FaceCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FaceCode({})", self.0)
    }
}

impl Serialize for FaceCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for FaceCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        FaceCode::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Seven-digit municipality geocode.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Geocode([u8; 7]);

impl Geocode {
    pub fn new(raw: &str) -> Result<Geocode, CodeError> {
        let s = raw.trim();
        let bytes = s.as_bytes();
        if bytes.len() != 7 || !bytes.iter().all(u8::is_ascii_digit) {
            return Err(CodeError::BadGeocode(raw.to_string()));
        }
        let mut out = [0u8; 7];
        out.copy_from_slice(bytes);
        Ok(Geocode(out))
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("geocode bytes are ASCII digits")
    }
}

impl FromStr for Geocode {
    type Err = CodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Geocode::new(s)
    }
}

impl fmt::Display for Geocode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Geocode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Geocode({})", self.as_str())
    }
}

impl Serialize for Geocode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Geocode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Geocode::new(&s).map_err(serde::de::Error::custom)
    }
}

/// WGS84 position in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub lon: f64,
    pub lat: f64,
}

impl Coord {
    pub fn new(lon: f64, lat: f64) -> Coord {
        Coord { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate ({lon}, {lat}) outside WGS84 bounds")]
    OutOfBounds { lon: f64, lat: f64 },
    #[error("polyline needs at least two vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polyline has zero length")]
    ZeroLength,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FaceGeometry {
    Line(Vec<Coord>),
    /// Degenerate single-point face.
    Point(Coord),
}

impl FaceGeometry {
    /// Validates vertex bounds and, for lines, vertex count and nonzero length.
    pub fn new_line(vertices: Vec<Coord>) -> Result<FaceGeometry, GeometryError> {
        if let Some(bad) = vertices.iter().find(|c| !c.is_valid()) {
            return Err(GeometryError::OutOfBounds {
                lon: bad.lon,
                lat: bad.lat,
            });
        }
        if vertices.len() < 2 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if vertices.windows(2).all(|w| w[0] == w[1]) {
            return Err(GeometryError::ZeroLength);
        }
        Ok(FaceGeometry::Line(vertices))
    }

    pub fn new_point(p: Coord) -> Result<FaceGeometry, GeometryError> {
        if !p.is_valid() {
            return Err(GeometryError::OutOfBounds {
                lon: p.lon,
                lat: p.lat,
            });
        }
        Ok(FaceGeometry::Point(p))
    }

    pub fn vertices(&self) -> &[Coord] {
        match self {
            FaceGeometry::Line(v) => v,
            FaceGeometry::Point(p) => std::slice::from_ref(p),
        }
    }
}

/// Address counts of one face keyed by (CEP, species). Kept as a sorted
/// vector; faces rarely carry more than a handful of keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AddressTally {
    counts: Vec<((Cep, SpeciesCategory), u32)>,
}

impl AddressTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, cep: Cep, species: SpeciesCategory, n: u32) {
        match self
            .counts
            .binary_search_by(|(k, _)| k.cmp(&(cep, species)))
        {
            Ok(i) => self.counts[i].1 += n,
            Err(i) => self.counts.insert(i, ((cep, species), n)),
        }
    }

    pub fn count(&self, cep: Cep, species: SpeciesCategory) -> u32 {
        self.counts
            .binary_search_by(|(k, _)| k.cmp(&(cep, species)))
            .map(|i| self.counts[i].1)
            .unwrap_or(0)
    }

    /// Entries in ascending (CEP, species) order.
    pub fn iter(&self) -> impl Iterator<Item = (Cep, SpeciesCategory, u32)> + '_ {
        self.counts.iter().map(|((c, s), n)| (*c, *s, *n))
    }

    /// Distinct CEPs with at least one address, ascending.
    pub fn ceps(&self) -> impl Iterator<Item = Cep> + '_ {
        let mut last = None;
        self.counts.iter().filter_map(move |((c, _), n)| {
            if *n == 0 || last == Some(*c) {
                None
            } else {
                last = Some(*c);
                Some(*c)
            }
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|(_, n)| u64::from(*n)).sum()
    }

    pub fn total_for_cep(&self, cep: Cep) -> u64 {
        self.counts
            .iter()
            .filter(|((c, _), _)| *c == cep)
            .map(|(_, n)| u64::from(*n))
            .sum()
    }

    /// Sum of the `species` counts under `cep`.
    pub fn sum_species(&self, cep: Cep, species: impl IntoIterator<Item = SpeciesCategory>) -> u64 {
        species
            .into_iter()
            .map(|s| u64::from(self.count(cep, s)))
            .sum()
    }

    /// Sum of the `species` counts over every CEP of the face.
    pub fn sum_species_all_ceps(&self, species: super::SpeciesSet) -> u64 {
        self.counts
            .iter()
            .filter(|((_, s), _)| species.contains(*s))
            .map(|(_, n)| u64::from(*n))
            .sum()
    }

    /// The CEP holding the most addresses on this face; ties go to the lower CEP.
    pub fn primary_cep(&self) -> Option<Cep> {
        let mut best: Option<(Cep, u64)> = None;
        for cep in self.ceps() {
            let n = self.total_for_cep(cep);
            if best.is_none_or(|(_, m)| n > m) {
                best = Some((cep, n));
            }
        }
        best.map(|(c, _)| c)
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn merge(&mut self, other: &AddressTally) {
        for (c, s, n) in other.iter() {
            self.add(c, s, n);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreetFace {
    pub face_code: FaceCode,
    pub municipality: Geocode,
    pub geometry: FaceGeometry,
    pub tally: AddressTally,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::normalize_cep;

    #[test]
    fn face_code_validation() {
        let code = FaceCode::new("172100005000001000000").unwrap();
        assert_eq!(code.municipality_prefix().as_str(), "1721000");
        assert!(FaceCode::new("12345").is_err());
        assert!(FaceCode::new("17210000500000100000a").is_err());
        assert!(FaceCode::new("").is_err());
    }

    #[test]
    fn geocode_validation() {
        assert!(Geocode::new("3548906").is_ok());
        assert!(Geocode::new("354890").is_err());
        assert!(Geocode::new("35489O6").is_err());
    }

    #[test]
    fn tally_counts_and_primary_cep() {
        let a = normalize_cep("77001422").unwrap();
        let b = normalize_cep("77001440").unwrap();
        let mut t = AddressTally::new();
        t.add(b, SpeciesCategory::OtherPurpose, 1);
        t.add(a, SpeciesCategory::OtherPurpose, 2);
        t.add(a, SpeciesCategory::PrivateHousehold, 3);
        t.add(b, SpeciesCategory::PrivateHousehold, 4);
        assert_eq!(t.count(a, SpeciesCategory::OtherPurpose), 2);
        assert_eq!(t.count(a, SpeciesCategory::Health), 0);
        assert_eq!(t.ceps().collect::<Vec<_>>(), vec![a, b]);
        assert_eq!(t.total(), 10);
        assert_eq!(t.primary_cep(), Some(a));
        t.add(b, SpeciesCategory::Health, 0);
        assert_eq!(t.primary_cep(), Some(a));
        assert_eq!(AddressTally::new().primary_cep(), None);
    }

    #[test]
    fn geometry_validation() {
        let ok = FaceGeometry::new_line(vec![Coord::new(0.0, 0.0), Coord::new(1.0, 0.0)]);
        assert!(ok.is_ok());
        assert_eq!(
            FaceGeometry::new_line(vec![Coord::new(0.0, 0.0)]),
            Err(GeometryError::TooFewVertices(1))
        );
        assert_eq!(
            FaceGeometry::new_line(vec![Coord::new(1.0, 1.0), Coord::new(1.0, 1.0)]),
            Err(GeometryError::ZeroLength)
        );
        assert!(matches!(
            FaceGeometry::new_point(Coord::new(181.0, 0.0)),
            Err(GeometryError::OutOfBounds { .. })
        ));
    }
}
