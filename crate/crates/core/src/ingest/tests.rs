use super::*;
use crate::model::SectorClass;
use proptest::prelude::*;

fn faces_mapping() -> ColumnMapping {
    MappingSet::normalized().faces
}

fn collect<R: Read, P: RowParser>(reader: IngestReader<R, P>) -> (Vec<P::Item>, IngestStats) {
    let mut reader = reader;
    let items = reader.by_ref().collect::<Result<Vec<_>, _>>().unwrap();
    (items, reader.into_stats())
}

#[test]
fn reads_table_face_code() {
    let data = "face_code,municipality,wkt\n\
                172100005000001000000,1721000,\"LINESTRING (-48.3535 -10.1651, -48.3531 -10.1651)\"\n";
    let (faces, stats) = collect(read_faces(data.as_bytes(), &faces_mapping()).unwrap());
    assert_eq!(faces.len(), 1);
    assert_eq!(faces[0].face_code.as_str(), "172100005000001000000");
    assert_eq!(faces[0].municipality.as_str(), "1721000");
    assert_eq!(faces[0].geometry.vertices().len(), 2);
    assert_eq!(faces[0].line, 2);
    assert_eq!(
        (stats.rows_read, stats.rows_accepted, stats.rows_rejected),
        (1, 1, 0)
    );
}

#[test]
fn empty_face_stream() {
    let (faces, stats) = collect(read_faces("".as_bytes(), &faces_mapping()).unwrap());
    assert!(faces.is_empty());
    assert_eq!(stats, IngestStats::default());
}

#[test]
fn duplicate_face_code_keeps_first() {
    let data = "face_code,municipality,wkt\n\
                172100005000001000000,1721000,POINT (1 1)\n\
                172100005000001000000,1721000,POINT (2 2)\n";
    let (faces, stats) = collect(read_faces(data.as_bytes(), &faces_mapping()).unwrap());
    assert_eq!(faces.len(), 1);
    assert_eq!(faces[0].geometry, FaceGeometry::Point(Coord::new(1.0, 1.0)));
    assert_eq!(
        (stats.rows_read, stats.rows_accepted, stats.rows_rejected),
        (2, 1, 1)
    );
    assert_eq!(stats.rejections_by_reason["DuplicateFaceCode"], 1);
    assert_eq!(stats.rejection_samples[0].line, 3);
}

#[test]
fn face_rejections() {
    let data = "face_code,municipality,wkt\n\
                172100005000001000000,1721000,POLYGON ((0 0, 1 0, 1 1, 0 0))\n\
                172100005000002000000,1721000,LINESTRING (0 0)\n\
                172100005000003000000,1721000,LINESTRING (200 0, 201 0)\n\
                172100005000004000000,,POINT (1 1)\n\
                123,1721000,POINT (1 1)\n\
                172100005000005000000,1721000,not wkt\n";
    let (faces, stats) = collect(read_faces(data.as_bytes(), &faces_mapping()).unwrap());
    assert!(faces.is_empty());
    assert_eq!(stats.rows_rejected, 6);
    assert_eq!(stats.rejections_by_reason["MalformedGeometry"], 4);
    assert_eq!(stats.rejections_by_reason["MissingField"], 1);
    assert_eq!(stats.rejections_by_reason["BadCode"], 1);
}

#[test]
fn vertex_list_and_prefix_municipality() {
    let mut m = ColumnMapping::delimited([
        ("face_code", FieldSpec::Column(0)),
        ("vertices", FieldSpec::Column(1)),
    ]);
    m.header = false;
    m.delimiter = '|';
    m.municipality_from_face_code = true;
    let data = "354890605000001000000|-47.89 -22.01;-47.88 -22.01\n\
                354890605000002000000|-47.87 -22.02\n";
    let (faces, _) = collect(read_faces(data.as_bytes(), &m).unwrap());
    assert_eq!(faces[0].municipality.as_str(), "3548906");
    assert!(matches!(faces[0].geometry, FaceGeometry::Line(ref v) if v.len() == 2));
    assert_eq!(
        faces[1].geometry,
        FaceGeometry::Point(Coord::new(-47.87, -22.02))
    );
}

#[test]
fn species_rows() {
    let data = "face_code,cep,species\n\
                172100005000001000000,77001422,6\n\
                172100005000001000000,77001-422,0\n\
                172100005000001000000,7700x422,6\n\
                172100005000001000000,,6\n";
    let (rows, stats) =
        collect(read_address_species(data.as_bytes(), &MappingSet::normalized().species).unwrap());
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].species, SpeciesCategory::OtherPurpose);
    assert_eq!(rows[0].cep.as_str(), "77001422");
    assert_eq!(stats.rejections_by_reason["UnknownSpecies"], 1);
    assert_eq!(stats.rejections_by_reason["MalformedCep"], 1);
    assert_eq!(stats.rejections_by_reason["MissingField"], 1);
}

#[test]
fn five_identical_rows_tally_to_five() {
    let mut data = String::from("face_code,cep,species\n");
    for _ in 0..5 {
        data.push_str("172100005000001000000,77001422,6\n");
    }
    let (rows, _) =
        collect(read_address_species(data.as_bytes(), &MappingSet::normalized().species).unwrap());
    assert_eq!(rows.len(), 5);
    let tallies = build_tallies(rows);
    let face = FaceCode::new("172100005000001000000").unwrap();
    let cep = normalize_cep("77001422").unwrap();
    assert_eq!(tallies[&face].count(cep, SpeciesCategory::OtherPurpose), 5);
}

fn sectors() -> SectorMappingConfig {
    SectorMappingConfig::new([("85", SectorClass::Education), ("86", SectorClass::Health)]).unwrap()
}

#[test]
fn establishment_rows() {
    let data = "establishment_id,municipality,cep,activity,jobs,year\n\
                e1,1721000,77001422,4711-3/02,8,2019\n\
                e2,1721000,77001422,8513900,0,2014\n\
                e3,1721000,77001422,8610101,5,2013\n\
                e4,1721000,77001422,8610101,-3,2019\n\
                e5,1721000,77001422,8610101,x,2019\n";
    let (rows, stats) = collect(
        read_establishments(
            data.as_bytes(),
            &MappingSet::normalized().establishments,
            &sectors(),
        )
        .unwrap(),
    );
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].jobs, 8);
    assert_eq!(rows[0].sector, SectorClass::Other);
    assert_eq!(rows[1].jobs, 0);
    assert_eq!(rows[1].sector, SectorClass::Education);
    assert_eq!(stats.rejections_by_reason["BadYear"], 1);
    assert_eq!(stats.rejections_by_reason["NegativeJobs"], 1);
    assert_eq!(stats.rejections_by_reason["BadNumber"], 1);
    assert!(stats.is_balanced());
}

#[test]
fn strict_mode_stops_at_first_rejection() {
    let data = "establishment_id,municipality,cep,activity,jobs,year\n\
                e1,1721000,77001422,1,8,2019\n\
                e2,1721000,77001422,1,8,2012\n\
                e3,1721000,77001422,1,8,2019\n";
    let mut reader = read_establishments(
        data.as_bytes(),
        &MappingSet::normalized().establishments,
        &sectors(),
    )
    .unwrap()
    .strict(true);
    assert!(reader.next().unwrap().is_ok());
    match reader.next().unwrap() {
        Err(Error::StrictRejection { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected strict rejection, got {other:?}"),
    }
    assert!(reader.next().is_none());
}

#[test]
fn latin1_fixed_width_species() {
    let mut m = ColumnMapping::delimited([
        ("face_code", FieldSpec::Range([0, 21])),
        ("cep", FieldSpec::Range([21, 29])),
        ("species", FieldSpec::Range([29, 30])),
    ]);
    m.kind = SourceKind::FixedWidth;
    m.header = false;
    m.encoding = Encoding::Latin1;
    let data: &[u8] =
        b"172100005000001000000770014226S\xe3o Carlos\n172100005000002000000770014401\n";
    let (rows, stats) = collect(read_address_species(data, &m).unwrap());
    assert_eq!(stats.rows_accepted, 2);
    assert_eq!(rows[1].species, SpeciesCategory::PrivateHousehold);
}

// Hand-counted fixture: 10 tuples over three faces.
#[test]
fn tallies_match_hand_count() {
    let f = |i: u32| FaceCode::new(&format!("1721000050000{i:02}000000")).unwrap();
    let c1 = normalize_cep("77001422").unwrap();
    let c2 = normalize_cep("77001440").unwrap();
    use SpeciesCategory::*;
    let tuples = [
        (1, c1, OtherPurpose),
        (1, c1, OtherPurpose),
        (1, c1, PrivateHousehold),
        (1, c2, Health),
        (2, c2, OtherPurpose),
        (2, c2, OtherPurpose),
        (2, c2, OtherPurpose),
        (3, c1, Educational),
        (3, c1, UnderConstruction),
        (3, c2, Educational),
    ];
    let tallies = build_tallies(tuples.iter().map(|&(i, cep, species)| AddressRecord {
        face_code: f(i),
        cep,
        species,
    }));
    assert_eq!(tallies.len(), 3);
    assert_eq!(tallies[&f(1)].count(c1, OtherPurpose), 2);
    assert_eq!(tallies[&f(1)].count(c1, PrivateHousehold), 1);
    assert_eq!(tallies[&f(1)].count(c2, Health), 1);
    assert_eq!(tallies[&f(1)].total(), 4);
    assert_eq!(tallies[&f(2)].count(c2, OtherPurpose), 3);
    assert_eq!(tallies[&f(2)].total(), 3);
    assert_eq!(tallies[&f(3)].count(c1, Educational), 1);
    assert_eq!(tallies[&f(3)].count(c2, Educational), 1);
    assert_eq!(tallies[&f(3)].count(c1, UnderConstruction), 1);
    assert!(build_tallies(Vec::new()).is_empty());
}

fn arb_address() -> impl Strategy<Value = AddressRecord> {
    (0u32..4, 0u32..3, 1u8..=7).prop_map(|(f, c, s)| AddressRecord {
        face_code: FaceCode::new(&format!("17210000500000{f}000000")).unwrap(),
        cep: Cep::from_u32(77_001_000 + c).unwrap(),
        species: SpeciesCategory::from_code(s).unwrap(),
    })
}

proptest! {
    #[test]
    fn tallies_ignore_order(
        rows in proptest::collection::vec(arb_address(), 0..40),
        seed in any::<u64>(),
    ) {
        let mut shuffled = rows.clone();
        // deterministic Fisher-Yates driven by the seed
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(build_tallies(rows.clone()), build_tallies(shuffled));
        let (a, b) = rows.split_at(rows.len() / 2);
        prop_assert_eq!(
            merge_tallies(build_tallies(a.to_vec()), build_tallies(b.to_vec())),
            build_tallies(rows.clone())
        );
    }

    #[test]
    fn row_accounting_balances(lines in proptest::collection::vec("[0-9a-z,-]{0,30}", 0..20)) {
        let mut data = String::from("face_code,cep,species\n");
        for l in &lines {
            data.push_str(l);
            data.push('\n');
        }
        let mut reader =
            read_address_species(data.as_bytes(), &MappingSet::normalized().species).unwrap();
        let accepted = reader.by_ref().filter(|r| r.is_ok()).count() as u64;
        let stats = reader.into_stats();
        prop_assert!(stats.is_balanced());
        prop_assert_eq!(stats.rows_accepted, accepted);
    }
}
