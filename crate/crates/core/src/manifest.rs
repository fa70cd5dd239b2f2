//! Dataset manifest: the pipeline's primary public contract. A JSON-lines
//! file whose first line is the header and every following line one record.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::SelectionPolicy;
use crate::geogrid::GridSpec;
use crate::phenology::PhenoConfig;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_PATCH_PX: u32 = 256;
pub const DEFAULT_GSD_M: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonEntry {
    /// 0 = spring .. 3 = winter
    pub season: u8,
    pub window_start_day: u32,
    pub window_end_day: u32,
    pub target_day: u32,
    pub scene_id: String,
    pub datetime: String,
    pub cloud_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub point_id: u64,
    pub lat: f64,
    pub lon: f64,
    pub seasons: Vec<SeasonEntry>,
    pub weight: f64,
    #[serde(default = "default_patch_px")]
    pub patch_px: u32,
    #[serde(default = "default_gsd_m")]
    pub gsd_m: f64,
}

fn default_patch_px() -> u32 {
    DEFAULT_PATCH_PX
}

fn default_gsd_m() -> f64 {
    DEFAULT_GSD_M
}

impl ManifestRecord {
    /// Patch ground extent in meters.
    pub fn patch_extent_m(&self) -> f64 {
        self.patch_px as f64 * self.gsd_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub grid: GridSpec,
    pub policy: SelectionPolicy,
    pub pheno: PhenoConfig,
    /// RFC 3339 creation time; omitted when deterministic output is wanted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.header.format_version != FORMAT_VERSION {
            return Err(Error::Validation {
                rule: "format version",
                msg: format!("unknown format version {}", self.header.format_version),
            });
        }
        let min = self.header.policy.min_images.max(2);
        let mut prev: Option<u64> = None;
        for r in &self.records {
            if let Some(p) = prev {
                if r.point_id <= p {
                    return Err(Error::Validation {
                        rule: "point id order",
                        msg: format!("point_id {} after {}", r.point_id, p),
                    });
                }
            }
            prev = Some(r.point_id);
            if r.seasons.len() < min || r.seasons.len() > 4 {
                return Err(Error::Validation {
                    rule: "min seasons",
                    msg: format!(
                        "point {} has {} season entries, expected {min}..=4",
                        r.point_id,
                        r.seasons.len()
                    ),
                });
            }
            let mut seen = [false; 4];
            for s in &r.seasons {
                if s.season > 3 || seen[s.season as usize] {
                    return Err(Error::Validation {
                        rule: "season index",
                        msg: format!("point {}: bad or duplicate season {}", r.point_id, s.season),
                    });
                }
                seen[s.season as usize] = true;
                if s.cloud_fraction >= self.header.policy.max_cloud {
                    return Err(Error::Validation {
                        rule: "cloud bound",
                        msg: format!(
                            "point {} season {}: cloud {} >= {}",
                            r.point_id, s.season, s.cloud_fraction, self.header.policy.max_cloud
                        ),
                    });
                }
            }
            if !(r.weight > 0.0) {
                return Err(Error::Validation {
                    rule: "positive weight",
                    msg: format!("point {}: weight {}", r.point_id, r.weight),
                });
            }
            if !(-90.0..=90.0).contains(&r.lat) || !(-180.0..180.0).contains(&r.lon) {
                return Err(Error::Validation {
                    rule: "coordinates",
                    msg: format!("point {}: ({}, {})", r.point_id, r.lat, r.lon),
                });
            }
        }
        Ok(())
    }
}

pub fn write_manifest(manifest: &DatasetManifest, destination: &Path) -> Result<()> {
    manifest.validate()?;
    let f = fs::File::create(destination).map_err(|e| Error::io(destination, e))?;
    let mut w = BufWriter::new(f);
    let header =
        serde_json::to_string(&manifest.header).map_err(|e| Error::Invalid(e.to_string()))?;
    writeln!(w, "{header}").map_err(|e| Error::io(destination, e))?;
    for r in &manifest.records {
        let line = serde_json::to_string(r).map_err(|e| Error::Invalid(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(destination, e))?;
    }
    w.flush().map_err(|e| Error::io(destination, e))?;
    Ok(())
}

pub fn read_manifest(source: &Path) -> Result<DatasetManifest> {
    let f = fs::File::open(source).map_err(|e| Error::io(source, e))?;
    let mut lines = BufReader::new(f).lines().enumerate();
    let header: ManifestHeader = match lines.next() {
        Some((_, Ok(line))) => serde_json::from_str(&line).map_err(|e| Error::Decode {
            path: source.to_path_buf(),
            line: 1,
            msg: e.to_string(),
        })?,
        Some((_, Err(e))) => return Err(Error::io(source, e)),
        None => {
            return Err(Error::Decode {
                path: source.to_path_buf(),
                line: 1,
                msg: "empty manifest".into(),
            })
        }
    };
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::Decode {
            path: source.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        records.push(rec);
    }
    let manifest = DatasetManifest { header, records };
    manifest.validate()?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestSummary {
    pub records: usize,
    /// season-coverage level -> record count
    pub coverage: BTreeMap<usize, usize>,
    pub mean_cloud: f64,
    /// distinct weight -> record count
    pub weight_histogram: Vec<(f64, usize)>,
}

pub fn summarize(manifest: &DatasetManifest) -> ManifestSummary {
    let mut coverage: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cloud_sum = 0.0;
    let mut cloud_count = 0usize;
    let mut weights: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in &manifest.records {
        *coverage.entry(r.seasons.len()).or_default() += 1;
        for s in &r.seasons {
            cloud_sum += s.cloud_fraction;
            cloud_count += 1;
        }
        let e = weights.entry(r.weight.to_bits()).or_insert((r.weight, 0));
        e.1 += 1;
    }
    let mut weight_histogram: Vec<(f64, usize)> = weights.into_values().collect();
    weight_histogram.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    ManifestSummary {
        records: manifest.records.len(),
        coverage,
        mean_cloud: if cloud_count == 0 { 0.0 } else { cloud_sum / cloud_count as f64 },
        weight_histogram,
    }
}
