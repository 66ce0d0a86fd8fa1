use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::model::{Cep, FaceCode, Geocode, StreetFace};

/// Position of a face in a [`CepIndex`]. Faces are stored sorted by code, so
/// ascending ids mean ascending face codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FaceId(pub u32);

/// Faces grouped by (municipality, CEP) and by municipality.
///
/// CEP lookups are scoped to the establishment's municipality, so an index
/// spanning several municipalities behaves exactly like separate
/// per-municipality indexes.
#[derive(Debug, Clone, Default)]
pub struct CepIndex {
    faces: Vec<StreetFace>,
    by_cep: HashMap<(Geocode, Cep), Vec<FaceId>>,
    by_municipality: BTreeMap<Geocode, Vec<FaceId>>,
    single_cep_municipalities: BTreeSet<Geocode>,
}

/// Builds the index. Faces must have unique codes; on a repeat the first
/// face in input order is kept.
pub fn build_index(faces: Vec<StreetFace>) -> CepIndex {
    let mut faces = faces;
    faces.sort_by(|a, b| a.face_code.cmp(&b.face_code));
    faces.dedup_by(|b, a| a.face_code == b.face_code);

    let mut by_cep: HashMap<(Geocode, Cep), Vec<FaceId>> = HashMap::new();
    let mut by_municipality: BTreeMap<Geocode, Vec<FaceId>> = BTreeMap::new();
    let mut ceps_seen: BTreeMap<Geocode, Option<Cep>> = BTreeMap::new();
    let mut multi: BTreeSet<Geocode> = BTreeSet::new();
    for (i, face) in faces.iter().enumerate() {
        let id = FaceId(u32::try_from(i).expect("fewer than 2^32 faces per index"));
        by_municipality
            .entry(face.municipality)
            .or_default()
            .push(id);
        for cep in face.tally.ceps() {
            by_cep.entry((face.municipality, cep)).or_default().push(id);
            match ceps_seen.entry(face.municipality).or_insert(None) {
                slot @ None => *slot = Some(cep),
                Some(first) if *first != cep => {
                    multi.insert(face.municipality);
                }
                Some(_) => {}
            }
        }
    }
    let single_cep_municipalities = ceps_seen
        .into_iter()
        .filter(|(g, cep)| cep.is_some() && !multi.contains(g))
        .map(|(g, _)| g)
        .collect();
    CepIndex {
        faces,
        by_cep,
        by_municipality,
        single_cep_municipalities,
    }
}

impl CepIndex {
    pub fn face(&self, id: FaceId) -> &StreetFace {
        &self.faces[id.0 as usize]
    }

    pub fn faces(&self) -> &[StreetFace] {
        &self.faces
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn find(&self, code: &FaceCode) -> Option<FaceId> {
        self.faces
            .binary_search_by(|f| f.face_code.cmp(code))
            .ok()
            .map(|i| FaceId(i as u32))
    }

    /// Faces of `municipality` with at least one address under `cep`,
    /// ascending by face code.
    pub fn faces_for_cep(&self, municipality: &Geocode, cep: &Cep) -> Option<&[FaceId]> {
        self.by_cep.get(&(*municipality, *cep)).map(Vec::as_slice)
    }

    /// All faces of `municipality`, with or without addresses.
    pub fn faces_for_municipality(&self, municipality: &Geocode) -> Option<&[FaceId]> {
        self.by_municipality.get(municipality).map(Vec::as_slice)
    }

    pub fn municipalities(&self) -> impl Iterator<Item = &Geocode> {
        self.by_municipality.keys()
    }

    pub fn is_single_cep(&self, municipality: &Geocode) -> bool {
        self.single_cep_municipalities.contains(municipality)
    }

    pub fn single_cep_municipalities(&self) -> &BTreeSet<Geocode> {
        &self.single_cep_municipalities
    }
}
