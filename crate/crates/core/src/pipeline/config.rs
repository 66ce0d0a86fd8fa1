use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::allocator::{CompatibilityMatrix, RoundingMode};
use crate::geometry::BoundingBox;
use crate::ingest::MappingSet;
use crate::model::{Geocode, SectorClass, SectorMappingConfig};
use crate::Error;

/// Default input volume per partition bucket.
pub const DEFAULT_BUCKET_BYTES: u64 = 4 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputLayout {
    /// One `jobs.csv` / `jobs.geojson` pair for the whole run.
    #[default]
    Combined,
    /// One pair per municipality under `<out>/<geocode>/`.
    PerMunicipality,
}

impl std::str::FromStr for OutputLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "combined" => Ok(OutputLayout::Combined),
            "per-municipality" => Ok(OutputLayout::PerMunicipality),
            other => Err(format!("unknown layout {other:?}")),
        }
    }
}

/// Run settings as they appear in a config file or on the command line.
/// Every field is optional so that flags can be laid over a file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub faces: Option<PathBuf>,
    pub species: Option<PathBuf>,
    pub establishments: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub year: Option<u16>,
    pub municipalities: Option<Vec<Geocode>>,
    pub rounding: Option<RoundingMode>,
    pub strict: Option<bool>,
    pub jobs: Option<usize>,
    pub layout: Option<OutputLayout>,
    pub bucket_bytes: Option<u64>,
    #[serde(default)]
    pub compatibility: BTreeMap<SectorClass, Vec<u8>>,
    #[serde(default)]
    pub bbox: BTreeMap<Geocode, [f64; 4]>,
}

impl RunSettings {
    pub fn from_toml(text: &str) -> Result<RunSettings, Error> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<RunSettings, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
        let mut settings = RunSettings::from_toml(&text)?;
        // relative paths in a config file are relative to the file
        if let Some(base) = path.parent() {
            for p in [
                &mut settings.faces,
                &mut settings.species,
                &mut settings.establishments,
                &mut settings.mapping,
                &mut settings.sectors,
                &mut settings.out,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(settings)
    }

    /// Values set in `top` win.
    pub fn overlay(mut self, top: RunSettings) -> RunSettings {
        macro_rules! take {
            ($($f:ident),*) => { $( if top.$f.is_some() { self.$f = top.$f; } )* };
        }
        take!(
            faces,
            species,
            establishments,
            mapping,
            sectors,
            out,
            year,
            municipalities,
            rounding,
            strict,
            jobs,
            layout,
            bucket_bytes
        );
        self.compatibility.extend(top.compatibility);
        self.bbox.extend(top.bbox);
        self
    }
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub faces: PathBuf,
    pub species: PathBuf,
    pub establishments: PathBuf,
    pub mappings: MappingSet,
    pub sectors: SectorMappingConfig,
    pub out: PathBuf,
    pub year: Option<u16>,
    pub municipalities: Option<BTreeSet<Geocode>>,
    pub rounding: RoundingMode,
    pub compatibility: CompatibilityMatrix,
    pub strict: bool,
    pub parallelism: usize,
    pub layout: OutputLayout,
    pub bucket_bytes: u64,
    pub bboxes: BTreeMap<Geocode, BoundingBox>,
}

fn readable(path: &Path) -> Result<(), Error> {
    File::open(path)
        .map(drop)
        .map_err(|e| Error::input(path, e))
}

impl RunConfig {
    /// Checks the settings: required paths given and readable, parallelism
    /// at least one, mapping and sector files valid.
    pub fn from_settings(s: RunSettings) -> Result<RunConfig, Error> {
        let need = |p: Option<PathBuf>, name: &str| {
            p.ok_or_else(|| Error::Config(format!("missing required setting {name:?}")))
        };
        let faces = need(s.faces, "faces")?;
        let species = need(s.species, "species")?;
        let establishments = need(s.establishments, "establishments")?;
        let out = need(s.out, "out")?;
        for p in [&faces, &species, &establishments] {
            readable(p)?;
        }
        let mappings = match &s.mapping {
            Some(p) => MappingSet::load(p)?,
            None => MappingSet::normalized(),
        };
        let sectors = match &s.sectors {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::input(p, e))?;
                SectorMappingConfig::from_toml(&text)?
            }
            None => SectorMappingConfig::default(),
        };
        let parallelism = s.jobs.unwrap_or(1);
        if parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        let bucket_bytes = s.bucket_bytes.unwrap_or(DEFAULT_BUCKET_BYTES);
        if bucket_bytes == 0 {
            return Err(Error::Config("bucket_bytes must be positive".into()));
        }
        let mut bboxes = BTreeMap::new();
        for (g, [min_lon, min_lat, max_lon, max_lat]) in s.bbox {
            if !(min_lon <= max_lon && min_lat <= max_lat) {
                return Err(Error::Config(format!("bounding box of {g} is inverted")));
            }
            bboxes.insert(
                g,
                BoundingBox {
                    min_lon,
                    min_lat,
                    max_lon,
                    max_lat,
                },
            );
        }
        Ok(RunConfig {
            faces,
            species,
            establishments,
            mappings,
            sectors,
            out,
            year: s.year,
            municipalities: s.municipalities.map(|v| v.into_iter().collect()),
            rounding: s.rounding.unwrap_or_default(),
            compatibility: CompatibilityMatrix::with_overrides(&s.compatibility)?,
            strict: s.strict.unwrap_or(false),
            parallelism,
            layout: s.layout.unwrap_or_default(),
            bucket_bytes,
            bboxes,
        })
    }

    pub fn selects(&self, g: &Geocode) -> bool {
        self.municipalities
            .as_ref()
            .is_none_or(|set| set.contains(g))
    }
}
