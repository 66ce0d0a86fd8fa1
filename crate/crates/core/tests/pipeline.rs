use std::fs;
use std::path::{Path, PathBuf};

use facejobs::allocator::RoundingMode;
use facejobs::model::{AllocationRule, Geocode};
use facejobs::pipeline::{self, OutputLayout, RunConfig, RunSettings};
use facejobs::synth::{self, SyntheticSpec};
use facejobs::verify::verify;
use facejobs::Error;

const FACES_HEADER: &str = "face_code,municipality,wkt\n";
const SPECIES_HEADER: &str = "face_code,cep,species\n";
const EST_HEADER: &str = "establishment_id,municipality,cep,activity,jobs,year\n";

struct Inputs {
    dir: tempfile::TempDir,
}

impl Inputs {
    fn new(faces: &str, species: &str, establishments: &str) -> Inputs {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("faces.csv"),
            format!("{FACES_HEADER}{faces}"),
        )
        .unwrap();
        fs::write(
            dir.path().join("species.csv"),
            format!("{SPECIES_HEADER}{species}"),
        )
        .unwrap();
        fs::write(
            dir.path().join("est.csv"),
            format!("{EST_HEADER}{establishments}"),
        )
        .unwrap();
        Inputs { dir }
    }

    fn settings(&self, out: &str) -> RunSettings {
        let p = self.dir.path();
        RunSettings {
            faces: Some(p.join("faces.csv")),
            species: Some(p.join("species.csv")),
            establishments: Some(p.join("est.csv")),
            out: Some(p.join(out)),
            ..Default::default()
        }
    }

    fn out(&self, out: &str) -> PathBuf {
        self.dir.path().join(out)
    }
}

fn run(settings: RunSettings) -> facejobs::model::RunReport {
    pipeline::run(&RunConfig::from_settings(settings).unwrap()).unwrap()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

fn two_municipalities() -> Inputs {
    Inputs::new(
        "172100005000001000000,1721000,\"LINESTRING (-48.36 -10.17, -48.3466 -10.1602)\"\n\
         172100005000002000000,1721000,\"LINESTRING (-48.35 -10.16, -48.34 -10.16)\"\n\
         230440005000001000000,2304400,\"LINESTRING (-38.5 -3.7, -38.49 -3.7)\"\n",
        "172100005000001000000,77001422,6\n\
         172100005000002000000,77001422,6\n\
         172100005000002000000,77001422,6\n\
         172100005000002000000,77001422,1\n\
         230440005000001000000,60000000,6\n",
        "a,1721000,77001422,4711302,9,2019\n\
         b,2304400,60000000,4711302,5,2019\n\
         c,2304400,60000000,4711302,7,2018\n",
    )
}

#[test]
fn single_face_gets_all_jobs() {
    let inputs = Inputs::new(
        "172100005000001000000,1721000,\"LINESTRING (-48.36 -10.17, -48.3466 -10.1602)\"\n",
        "172100005000001000000,77001422,6\n",
        "e1,1721000,77001422,4711302,4,2019\n",
    );
    let report = run(inputs.settings("out"));
    assert_eq!(
        read(&inputs.out("out").join("jobs.csv")),
        "cod_face,CEP,non residencial,jobs,lon,lat\n\
         172100005000001000000,77001422,1,4,-48.3533,-10.1651\n"
    );
    assert_eq!(report.input_jobs_total, 4);
    assert!(report.is_conserved());
    assert_eq!(report.rows_written, 1);
}

#[test]
fn empty_establishments_give_header_only_outputs() {
    let inputs = Inputs::new(
        "172100005000001000000,1721000,\"LINESTRING (-48.36 -10.17, -48.3466 -10.1602)\"\n",
        "172100005000001000000,77001422,6\n",
        "",
    );
    let report = run(inputs.settings("out"));
    let out = inputs.out("out");
    assert_eq!(
        read(&out.join("jobs.csv")),
        "cod_face,CEP,non residencial,jobs,lon,lat\n"
    );
    assert_eq!(
        read(&out.join("jobs.geojson")),
        "{\"type\":\"FeatureCollection\",\"features\":[]}\n"
    );
    assert_eq!(report.input_jobs_total, 0);
    assert_eq!(report.establishments_total(), 0);
    let json: serde_json::Value = serde_json::from_str(&read(&out.join("report.json"))).unwrap();
    assert!(json.is_object());
}

#[test]
fn municipality_filter_selects_one_output_set() {
    let inputs = two_municipalities();
    let report = run(RunSettings {
        municipalities: Some(vec![Geocode::new("2304400").unwrap()]),
        layout: Some(OutputLayout::PerMunicipality),
        ..inputs.settings("out")
    });
    let out = inputs.out("out");
    assert!(out.join("2304400").join("jobs.csv").is_file());
    assert!(!out.join("1721000").exists());
    assert_eq!(report.per_municipality_totals.len(), 1);
    assert_eq!(report.establishments_filtered, 1);
    assert_eq!(report.input_jobs_total, 12);
}

#[test]
fn year_filter_drops_other_years() {
    let inputs = two_municipalities();
    let report = run(RunSettings {
        year: Some(2019),
        ..inputs.settings("out")
    });
    assert_eq!(report.establishments_filtered, 1);
    assert_eq!(report.input_jobs_total, 14);
    let csv = read(&inputs.out("out").join("jobs.csv"));
    assert_eq!(
        csv,
        "cod_face,CEP,non residencial,jobs,lon,lat\n\
         172100005000001000000,77001422,1,3,-48.3533,-10.1651\n\
         172100005000002000000,77001422,2,6,-48.345,-10.16\n\
         230440005000001000000,60000000,1,5,-38.495,-3.7\n"
    );
}

#[test]
fn species_without_geometry_and_duplicates_are_counted() {
    let inputs = Inputs::new(
        "172100005000001000000,1721000,\"LINESTRING (-48.36 -10.17, -48.3466 -10.1602)\"\n\
         172100005000001000000,1721000,\"LINESTRING (0 0, 1 1)\"\n",
        "172100005000001000000,77001422,6\n\
         172100005000009000000,77001422,6\n\
         172100005000009000000,77001422,5\n",
        "e1,1721000,77001422,4711302,4,2019\n",
    );
    let report = run(inputs.settings("out"));
    let faces = &report.ingest["faces"];
    assert_eq!(
        (faces.rows_read, faces.rows_accepted, faces.rows_rejected),
        (2, 1, 1)
    );
    assert_eq!(faces.rejection_samples[0].line, 3);
    assert_eq!(report.species_faces_without_geometry, 1);
    assert_eq!(report.species_rows_without_geometry, 2);
    // the first row wins
    assert!(read(&inputs.out("out").join("jobs.csv")).contains(",-48.3533,-10.1651\n"));

    let err = pipeline::run(
        &RunConfig::from_settings(RunSettings {
            strict: Some(true),
            ..inputs.settings("strict")
        })
        .unwrap(),
    )
    .unwrap_err();
    assert!(
        matches!(
            err,
            Error::StrictRejection {
                input: "faces",
                line: 3,
                ..
            }
        ),
        "{err}"
    );
}

#[test]
fn strict_mode_stops_at_first_bad_row() {
    let inputs = Inputs::new(
        "172100005000001000000,1721000,\"LINESTRING (-48.36 -10.17, -48.3466 -10.1602)\"\n",
        "172100005000001000000,77001422,6\n",
        "e1,1721000,77001422,4711302,-4,2019\n",
    );
    let report = run(inputs.settings("lenient"));
    assert_eq!(report.ingest["establishments"].rows_rejected, 1);
    let err = pipeline::run(
        &RunConfig::from_settings(RunSettings {
            strict: Some(true),
            ..inputs.settings("strict")
        })
        .unwrap(),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        Error::StrictRejection {
            input: "establishments",
            line: 2,
            ..
        }
    ));
}

#[test]
fn faceless_municipality_is_unallocated() {
    let inputs = Inputs::new("", "", "x,2304400,60000000,4711302,3,2019\n");
    let report = run(inputs.settings("out"));
    assert_eq!(report.unallocated_jobs_total(), 3);
    assert_eq!(report.rule_histogram[&AllocationRule::Unallocated], 1);
    assert!(report.is_conserved());
}

fn synthetic(spec: &SyntheticSpec) -> (tempfile::TempDir, synth::GeneratedFiles) {
    let dir = tempfile::tempdir().unwrap();
    let (files, _) = synth::generate(spec, dir.path()).unwrap();
    (dir, files)
}

fn settings_for(files: &synth::GeneratedFiles, out: &Path) -> RunSettings {
    RunSettings::load(&files.run_config)
        .unwrap()
        .overlay(RunSettings {
            out: Some(out.to_path_buf()),
            ..Default::default()
        })
}

#[test]
fn synthetic_run_matches_ground_truth() {
    let spec = SyntheticSpec {
        municipalities: 10,
        faces_per_municipality: [100, 100],
        faceless_municipalities: 1,
        ..SyntheticSpec::default()
    };
    let (dir, files) = synthetic(&spec);
    let truth = files.truth.clone().unwrap();

    let frac = dir.path().join("frac");
    let report = run(settings_for(&files, &frac));
    assert!(report.is_conserved());
    assert!(report.unallocated_jobs_total() > 0);
    let verdict = verify(&frac, &truth, RoundingMode::Fractional).unwrap();
    assert!(
        verdict.passed(),
        "{:?}",
        &verdict.mismatches[..verdict.mismatches.len().min(5)]
    );
    assert!(verdict.rows_compared > 100);

    let int = dir.path().join("int");
    run(RunSettings {
        rounding: Some(RoundingMode::LargestRemainder),
        ..settings_for(&files, &int)
    });
    assert!(verify(&int, &truth, RoundingMode::LargestRemainder)
        .unwrap()
        .passed());
    // integer output read as fractional fails somewhere
    assert!(!verify(&int, &truth, RoundingMode::Fractional)
        .unwrap()
        .passed());
}

#[test]
fn perturbed_output_fails_verification_naming_the_face() {
    let (dir, files) = synthetic(&SyntheticSpec {
        municipalities: 2,
        ..SyntheticSpec::default()
    });
    let out = dir.path().join("out");
    run(settings_for(&files, &out));
    let truth = files.truth.unwrap();
    assert!(verify(&out, &truth, RoundingMode::Fractional)
        .unwrap()
        .passed());

    let csv = read(&out.join("jobs.csv"));
    let mut lines: Vec<String> = csv.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    fields[3] = format!("{}1", fields[3]);
    let face = fields[0].clone();
    lines[1] = fields.join(",");
    fs::write(out.join("jobs.csv"), lines.join("\n") + "\n").unwrap();
    let verdict = verify(&out, &truth, RoundingMode::Fractional).unwrap();
    assert_eq!(verdict.mismatches.len(), 1);
    assert!(verdict.mismatches[0].to_string().contains(&face));
}

fn output_bytes(dir: &Path) -> Vec<Vec<u8>> {
    ["jobs.csv", "jobs.geojson", "report.json"]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap())
        .collect()
}

#[test]
fn outputs_do_not_depend_on_parallelism_or_bucketing() {
    let (dir, files) = synthetic(&SyntheticSpec {
        municipalities: 12,
        faceless_municipalities: 2,
        ..SyntheticSpec::default()
    });
    let base = dir.path().join("base");
    run(settings_for(&files, &base));
    for (jobs, bucket_bytes) in [(4, None), (3, Some(2_000)), (1, Some(50_000))] {
        let out = dir.path().join(format!("j{jobs}"));
        run(RunSettings {
            jobs: Some(jobs),
            bucket_bytes,
            ..settings_for(&files, &out)
        });
        assert_eq!(output_bytes(&base), output_bytes(&out), "jobs {jobs}");
    }
}

#[test]
fn partitions_are_independent() {
    let (dir, files) = synthetic(&SyntheticSpec {
        municipalities: 5,
        ..SyntheticSpec::default()
    });
    let all = dir.path().join("all");
    run(settings_for(&files, &all));
    let mut concatenated = String::new();
    for m in 0..5 {
        let g = Geocode::new(&format!("{:07}", 1_000_000 + m)).unwrap();
        let out = dir.path().join(g.as_str());
        run(RunSettings {
            municipalities: Some(vec![g]),
            ..settings_for(&files, &out)
        });
        let csv = read(&out.join("jobs.csv"));
        concatenated.extend(csv.lines().skip(1).map(|l| format!("{l}\n")));
    }
    let combined = read(&all.join("jobs.csv"));
    assert_eq!(combined.split_once('\n').unwrap().1, concatenated);

    // the per-municipality layout writes the same rows
    let per = dir.path().join("per");
    run(RunSettings {
        layout: Some(OutputLayout::PerMunicipality),
        ..settings_for(&files, &per)
    });
    let mut from_dirs = String::new();
    for m in 0..5 {
        let csv = read(&per.join(format!("{:07}", 1_000_000 + m)).join("jobs.csv"));
        from_dirs.extend(csv.lines().skip(1).map(|l| format!("{l}\n")));
    }
    assert_eq!(from_dirs, concatenated);
}

#[test]
fn inspect_reports_stats_without_output() {
    let inputs = two_municipalities();
    let stats = pipeline::inspect(&pipeline::InspectConfig {
        faces: Some(inputs.dir.path().join("faces.csv")),
        species: None,
        establishments: Some(inputs.dir.path().join("est.csv")),
        mappings: facejobs::ingest::MappingSet::normalized(),
        sectors: Default::default(),
        strict: false,
    })
    .unwrap();
    assert_eq!(stats.len(), 2);
    assert_eq!(stats["faces"].rows_accepted, 3);
    assert_eq!(stats["establishments"].rows_accepted, 3);
}

#[test]
fn config_file_paths_resolve_against_the_file() {
    let (dir, files) = synthetic(&SyntheticSpec {
        municipalities: 1,
        ..SyntheticSpec::default()
    });
    let settings = RunSettings::load(&files.run_config).unwrap();
    assert_eq!(
        settings.out.as_deref(),
        Some(dir.path().join("output").as_path())
    );
    let config = RunConfig::from_settings(settings).unwrap();
    assert_eq!(config.year, Some(2019));
}
