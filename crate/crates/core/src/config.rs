//! Pipeline configuration: a single TOML file with one section per stage.
//! Unknown keys are rejected so typos never silently fall back to defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::SelectionPolicy;
use crate::geogrid::GridSpec;
use crate::phenology::{PhenoConfig, SeasonMode};
use crate::sampler::WeightPolicy;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelinePaths {
    /// land mask raster stem (<stem>.json + <stem>.bin)
    pub mask: Option<PathBuf>,
    /// per-point daily EVI CSV (point_id,year,day,evi)
    pub evi_csv: Option<PathBuf>,
    /// directory of transition rasters named <variable>_<year>
    pub evi_rasters: Option<PathBuf>,
    /// local catalog JSON-lines path or http(s) URL
    pub catalog: Option<String>,
    /// per-season mean NDVI raster stems (spring, summer, autumn, winter)
    pub ndvi: Vec<PathBuf>,
    /// mountain mask raster stem
    pub mountain_mask: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub season_mode: SeasonMode,
    pub year_length: u32,
    pub workers: usize,
    pub max_failure_fraction: f64,
    pub grid: GridSpec,
    pub pheno: PhenoConfig,
    pub selection: SelectionPolicy,
    pub weights: WeightPolicy,
    pub paths: PipelinePaths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            season_mode: SeasonMode::Phenological,
            year_length: 365,
            workers: 8,
            max_failure_fraction: 0.0,
            grid: GridSpec::default(),
            pheno: PhenoConfig::default(),
            selection: SelectionPolicy::default(),
            weights: WeightPolicy::default(),
            paths: PipelinePaths { output_dir: PathBuf::from("out"), ..Default::default() },
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.pheno.validate()?;
        self.selection.validate()?;
        self.weights.validate()?;
        if self.year_length != 365 && self.year_length != 366 {
            return Err(Error::Config("year_length must be 365 or 366".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(Error::Config("max_failure_fraction must be in [0,1]".into()));
        }
        // referenced files must exist up front (URLs are checked at query time)
        let mut referenced: Vec<&PathBuf> = Vec::new();
        referenced.extend(self.paths.mask.iter());
        referenced.extend(self.paths.evi_csv.iter());
        referenced.extend(self.paths.evi_rasters.iter());
        referenced.extend(self.paths.ndvi.iter());
        referenced.extend(self.paths.mountain_mask.iter());
        if let Some(cat) = &self.paths.catalog {
            if !cat.starts_with("http://") && !cat.starts_with("https://") {
                let p = PathBuf::from(cat);
                if !p.exists() {
                    return Err(Error::Config(format!("catalog path not found: {cat}")));
                }
            }
        }
        for p in referenced {
            let probe = if p.extension().is_none() { p.with_extension("json") } else { p.clone() };
            if !probe.exists() && !p.exists() {
                return Err(Error::Config(format!("path not found: {}", p.display())));
            }
        }
        Ok(())
    }
}

pub fn parse_config(source: &str) -> Result<PipelineConfig> {
    let cfg: PipelineConfig =
        toml::from_str(source).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
