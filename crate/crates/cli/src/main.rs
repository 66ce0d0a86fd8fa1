use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facejobs::allocator::RoundingMode;
use facejobs::ingest::MappingSet;
use facejobs::model::{Geocode, SectorMappingConfig};
use facejobs::pipeline::{self, InspectConfig, OutputLayout, RunConfig, RunSettings};
use facejobs::synth::{self, SyntheticSpec};
use facejobs::{export, verify, Error};

const EXIT_CONFIG: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_MISMATCH: u8 = 3;
const EXIT_STRICT: u8 = 4;

/// Places establishment job counts on census street faces.
#[derive(Parser)]
#[command(name = "facejobs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Allocate jobs and write CSV, GeoJSON and report outputs.
    Run(RunArgs),
    /// Write a seeded synthetic input set with its ground-truth ledger.
    Generate(GenerateArgs),
    /// Compare a run's output with a ground-truth ledger.
    Verify(VerifyArgs),
    /// Print ingest statistics without allocating.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    faces: Option<PathBuf>,
    #[arg(long)]
    species: Option<PathBuf>,
    #[arg(long)]
    establishments: Option<PathBuf>,
    /// Column mapping TOML; defaults to the normalized CSV layouts.
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Activity-code prefix to sector TOML.
    #[arg(long)]
    sectors: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep only establishments of this year.
    #[arg(long)]
    year: Option<u16>,
    /// Comma-separated municipality geocodes to process.
    #[arg(long, value_delimiter = ',')]
    municipalities: Option<Vec<Geocode>>,
    /// fractional or integer.
    #[arg(long)]
    rounding: Option<RoundingMode>,
    /// combined or per-municipality.
    #[arg(long)]
    layout: Option<OutputLayout>,
    /// Fail on the first rejected row or failed municipality.
    #[arg(long)]
    strict: bool,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    /// TOML synthetic spec; flags override its values.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of municipalities with faces.
    #[arg(long)]
    municipalities: Option<u32>,
    #[arg(long)]
    single_cep_fraction: Option<f64>,
    /// Skip the ground-truth ledger.
    #[arg(long)]
    no_truth: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Output directory of a run.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Rounding mode the run used.
    #[arg(long, default_value = "fractional")]
    rounding: RoundingMode,
    /// Mismatches printed before the listing is cut short.
    #[arg(long, default_value_t = 50)]
    max_diff: usize,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    faces: Option<PathBuf>,
    #[arg(long)]
    species: Option<PathBuf>,
    #[arg(long)]
    establishments: Option<PathBuf>,
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    sectors: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::StrictRejection { .. } | Error::Partition { .. } => EXIT_STRICT,
        Error::Input { .. } | Error::Format(_) | Error::Io(_) => EXIT_INPUT,
    }
}

fn run(args: RunArgs) -> Result<u8, Error> {
    let file = match &args.config {
        Some(p) => RunSettings::load(p)?,
        None => RunSettings::default(),
    };
    let flags = RunSettings {
        faces: args.faces,
        species: args.species,
        establishments: args.establishments,
        mapping: args.mapping,
        sectors: args.sectors,
        out: args.out,
        year: args.year,
        municipalities: args.municipalities,
        rounding: args.rounding,
        strict: args.strict.then_some(true),
        jobs: args.jobs,
        layout: args.layout,
        ..Default::default()
    };
    let config = RunConfig::from_settings(file.overlay(flags))?;
    let report = pipeline::run(&config)?;
    println!(
        "input jobs {}, allocated {}, unallocated {}; {} rows written to {}",
        report.input_jobs_total,
        export::format_jobs(&report.allocated_jobs_total),
        report.unallocated_jobs_total(),
        report.rows_written,
        config.out.display()
    );
    for (g, why) in &report.failed_municipalities {
        eprintln!("warning: municipality {g} skipped: {why}");
    }
    Ok(0)
}

fn generate(args: GenerateArgs) -> Result<u8, Error> {
    let mut spec = match &args.spec {
        Some(p) => {
            SyntheticSpec::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::input(p, e))?)?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.municipalities {
        spec.municipalities = n;
    }
    if let Some(f) = args.single_cep_fraction {
        spec.single_cep_fraction = f;
    }
    spec.truth &= !args.no_truth;
    let (files, summary) = synth::generate(&spec, &args.out)?;
    println!(
        "{} faces, {} species rows, {} establishments ({} jobs) in {}",
        summary.faces,
        summary.species_rows,
        summary.establishments,
        summary.input_jobs,
        args.out.display()
    );
    println!(
        "run with: facejobs run --config {}",
        files.run_config.display()
    );
    Ok(0)
}

fn verify(args: VerifyArgs) -> Result<u8, Error> {
    let verdict = verify::verify(&args.out, &args.truth, args.rounding)?;
    for m in verdict.mismatches.iter().take(args.max_diff) {
        println!("{m}");
    }
    if verdict.mismatches.len() > args.max_diff {
        println!("... {} more", verdict.mismatches.len() - args.max_diff);
    }
    if let Some((want, got)) = &verdict.total_mismatch {
        println!("total: expected {want}, got {got}");
    }
    if verdict.passed() {
        println!("PASS: {} rows match", verdict.rows_compared);
        Ok(0)
    } else {
        println!(
            "FAIL: {} of {} rows differ",
            verdict.mismatches.len(),
            verdict.rows_compared
        );
        Ok(EXIT_MISMATCH)
    }
}

fn inspect(args: InspectArgs) -> Result<u8, Error> {
    let mappings = match &args.mapping {
        Some(p) => MappingSet::load(p)?,
        None => MappingSet::normalized(),
    };
    let sectors = match &args.sectors {
        Some(p) => SectorMappingConfig::from_toml(
            &std::fs::read_to_string(p).map_err(|e| Error::input(p, e))?,
        )?,
        None => SectorMappingConfig::default(),
    };
    let stats = pipeline::inspect(&InspectConfig {
        faces: args.faces,
        species: args.species,
        establishments: args.establishments,
        mappings,
        sectors,
        strict: args.strict,
    })?;
    let json = serde_json::to_string_pretty(&stats).map_err(|e| Error::Format(e.to_string()))?;
    println!("{json}");
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Generate(a) => generate(a),
        Command::Verify(a) => verify(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
