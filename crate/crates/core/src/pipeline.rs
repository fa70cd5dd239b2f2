//! Stage orchestration. Each stage reads the previous stage's artifacts
//! from the output directory and writes its own, so runs are resumable and
//! every stage is a pure function of (inputs, config, seed).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{build_dataset, CatalogBackend, LocalCatalog, RemoteCatalog};
use crate::config::PipelineConfig;
use crate::geogrid::{generate_grid, GeoPoint};
use crate::manifest::{
    write_manifest, DatasetManifest, ManifestHeader, ManifestRecord, SeasonEntry, DEFAULT_GSD_M,
    DEFAULT_PATCH_PX, FORMAT_VERSION,
};
use crate::phenology::{
    detect_transitions, fill_missing, median_phenology, season_windows, EviCurve, PhenoDates,
    SeasonWindows,
};
use crate::raster::Raster;
use crate::sampler::{location_weight, LocationAttributes, WeightFactors};
use crate::{Error, Result};

pub const POINTS_FILE: &str = "points.jsonl";
pub const PHENO_FILE: &str = "pheno.jsonl";
pub const SELECTIONS_FILE: &str = "selections.jsonl";
pub const WEIGHTS_FILE: &str = "weights.jsonl";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for item in items {
        let line = serde_json::to_string(&item).map_err(|e| Error::Invalid(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Generates the equal-area grid over the configured land mask.
pub fn run_grid(cfg: &PipelineConfig) -> Result<PathBuf> {
    let mask_path = cfg
        .paths
        .mask
        .as_ref()
        .ok_or_else(|| Error::Config("paths.mask is required for the grid stage".into()))
        .map_err(|e| e.in_stage("grid"))?;
    let mask = Raster::read(mask_path).map_err(|e| e.in_stage("grid"))?;
    let points = generate_grid(&cfg.grid, &mask).map_err(|e| e.in_stage("grid"))?;
    let out = cfg.paths.output_dir.join(POINTS_FILE);
    write_jsonl(&out, points).map_err(|e| e.in_stage("grid"))?;
    Ok(out)
}

pub fn load_points(cfg: &PipelineConfig) -> Result<Vec<GeoPoint>> {
    read_jsonl(&cfg.paths.output_dir.join(POINTS_FILE))
}

#[derive(Debug, Serialize, Deserialize)]
struct PhenoLine {
    id: u64,
    #[serde(flatten)]
    dates: PhenoDates,
}

#[derive(Debug, Deserialize)]
struct EviCsvRow {
    point_id: u64,
    year: i32,
    day: u32,
    evi: f64,
}

fn pheno_from_csv(cfg: &PipelineConfig, points: &[GeoPoint]) -> Result<BTreeMap<u64, PhenoDates>> {
    let path = cfg.paths.evi_csv.as_ref().unwrap();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut curves: BTreeMap<(u64, i32), Vec<f64>> = BTreeMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("point_id") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Decode {
                path: path.clone(),
                line: i + 1,
                msg: format!("expected 4 columns, found {}", fields.len()),
            });
        }
        let row = EviCsvRow {
            point_id: fields[0].trim().parse().map_err(|_| Error::Decode {
                path: path.clone(),
                line: i + 1,
                msg: "bad point_id".into(),
            })?,
            year: fields[1].trim().parse().map_err(|_| Error::Decode {
                path: path.clone(),
                line: i + 1,
                msg: "bad year".into(),
            })?,
            day: fields[2].trim().parse().map_err(|_| Error::Decode {
                path: path.clone(),
                line: i + 1,
                msg: "bad day".into(),
            })?,
            evi: fields[3].trim().parse().map_err(|_| Error::Decode {
                path: path.clone(),
                line: i + 1,
                msg: "bad evi".into(),
            })?,
        };
        let n = crate::phenology::days_in_year(row.year) as usize;
        let curve = curves.entry((row.point_id, row.year)).or_insert_with(|| vec![f64::NAN; n]);
        if row.day == 0 || row.day as usize > curve.len() {
            return Err(Error::Decode {
                path: path.clone(),
                line: i + 1,
                msg: format!("day {} outside year {}", row.day, row.year),
            });
        }
        curve[(row.day - 1) as usize] = row.evi;
    }
    let mut per_point: BTreeMap<u64, Vec<PhenoDates>> = BTreeMap::new();
    for ((pid, year), values) in curves {
        let curve = EviCurve::new(year, values)?;
        per_point.entry(pid).or_default().push(detect_transitions(&curve, &cfg.pheno)?);
    }
    let mut known = BTreeMap::new();
    for p in points {
        if let Some(per_year) = per_point.get(&p.id) {
            let med = median_phenology(per_year);
            if !med.is_empty() {
                known.insert(p.id, med);
            }
        }
    }
    Ok(known)
}

const TRANSITION_VARS: [&str; 4] = ["greenup", "maturity", "senescence", "dormancy"];

fn pheno_from_rasters(
    cfg: &PipelineConfig,
    points: &[GeoPoint],
) -> Result<BTreeMap<u64, PhenoDates>> {
    let dir = cfg.paths.evi_rasters.as_ref().unwrap();
    // collect years from files named <variable>_<year>.json
    let mut years: Vec<i32> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(rest) = name.strip_suffix(".json") {
            if let Some((var, year)) = rest.rsplit_once('_') {
                if TRANSITION_VARS.contains(&var) {
                    if let Ok(y) = year.parse() {
                        if !years.contains(&y) {
                            years.push(y);
                        }
                    }
                }
            }
        }
    }
    years.sort_unstable();
    if years.is_empty() {
        return Err(Error::Config(format!(
            "no transition rasters (<variable>_<year>) found in {}",
            dir.display()
        )));
    }
    let mut per_point: BTreeMap<u64, Vec<PhenoDates>> = BTreeMap::new();
    for year in years {
        let mut rasters = Vec::with_capacity(4);
        for var in TRANSITION_VARS {
            let stem = dir.join(format!("{var}_{year}"));
            rasters.push(if stem.with_extension("json").exists() {
                Some(Raster::read(&stem)?)
            } else {
                None
            });
        }
        for p in points {
            let day = |r: &Option<Raster>| -> Option<u32> {
                r.as_ref()
                    .and_then(|r| r.sample(p.lat, p.lon))
                    .filter(|v| *v >= 1.0)
                    .map(|v| v as u32)
            };
            let dates = PhenoDates {
                greenup: day(&rasters[0]),
                maturity: day(&rasters[1]),
                senescence: day(&rasters[2]),
                dormancy: day(&rasters[3]),
            };
            if !dates.is_empty() {
                per_point.entry(p.id).or_default().push(dates);
            }
        }
    }
    Ok(per_point
        .into_iter()
        .map(|(pid, per_year)| (pid, median_phenology(&per_year)))
        .collect())
}

/// Derives per-point transition dates (median across years), gap-fills
/// missing points from their nearest complete neighbor, and persists the
/// complete table.
pub fn run_pheno(cfg: &PipelineConfig) -> Result<PathBuf> {
    let stage = |e: Error| e.in_stage("pheno");
    let points = load_points(cfg).map_err(stage)?;
    let known = if cfg.paths.evi_csv.is_some() {
        pheno_from_csv(cfg, &points).map_err(stage)?
    } else if cfg.paths.evi_rasters.is_some() {
        pheno_from_rasters(cfg, &points).map_err(stage)?
    } else {
        return Err(Error::Config(
            "pheno stage needs paths.evi_csv or paths.evi_rasters".into(),
        )
        .in_stage("pheno"));
    };
    let filled = fill_missing(&points, &known).map_err(stage)?;
    let out = cfg.paths.output_dir.join(PHENO_FILE);
    write_jsonl(&out, filled.into_iter().map(|(id, dates)| PhenoLine { id, dates }))
        .map_err(stage)?;
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionLine {
    pub point_id: u64,
    pub windows: SeasonWindows,
    #[serde(flatten)]
    pub selection_body: SelectionBody,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionBody {
    pub scenes: [Option<crate::catalog::SceneRecord>; 4],
    pub excluded: bool,
    pub exclusion_reason: Option<String>,
}

/// Builds season windows per point and selects the least-clouded scene per
/// location-season from the configured catalog.
pub fn run_select(cfg: &PipelineConfig) -> Result<PathBuf> {
    let stage = |e: Error| e.in_stage("select");
    let points = load_points(cfg).map_err(stage)?;
    let pheno: Vec<PhenoLine> =
        read_jsonl(&cfg.paths.output_dir.join(PHENO_FILE)).map_err(stage)?;
    let pheno: BTreeMap<u64, PhenoDates> = pheno.into_iter().map(|l| (l.id, l.dates)).collect();
    let mut windows_map: BTreeMap<u64, SeasonWindows> = BTreeMap::new();
    for p in &points {
        let dates = pheno.get(&p.id).ok_or_else(|| {
            Error::Invalid(format!("no phenology for point {}", p.id)).in_stage("select")
        })?;
        windows_map.insert(
            p.id,
            season_windows(dates, cfg.season_mode, cfg.year_length).map_err(stage)?,
        );
    }
    let catalog = cfg
        .paths
        .catalog
        .as_ref()
        .ok_or_else(|| Error::Config("paths.catalog is required".into()).in_stage("select"))?;
    let backend: Box<dyn CatalogBackend> =
        if catalog.starts_with("http://") || catalog.starts_with("https://") {
            Box::new(RemoteCatalog::new(catalog.clone()))
        } else {
            Box::new(LocalCatalog::load(Path::new(catalog)).map_err(stage)?)
        };
    let selections = build_dataset(
        &points,
        &windows_map,
        backend.as_ref(),
        &cfg.selection,
        cfg.workers,
        cfg.max_failure_fraction,
    )
    .map_err(stage)?;
    let out = cfg.paths.output_dir.join(SELECTIONS_FILE);
    write_jsonl(
        &out,
        selections.into_iter().map(|s| SelectionLine {
            point_id: s.point_id,
            windows: windows_map[&s.point_id],
            selection_body: SelectionBody {
                scenes: s.scenes,
                excluded: s.excluded,
                exclusion_reason: s.exclusion_reason,
            },
        }),
    )
    .map_err(stage)?;
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightLine {
    point_id: u64,
    weight: f64,
    factors: WeightFactors,
}

/// Computes sampling weights from the NDVI and mountain rasters, then, when
/// selections exist, assembles the dataset manifest.
pub fn run_weights(cfg: &PipelineConfig, created: Option<String>) -> Result<PathBuf> {
    let stage = |e: Error| e.in_stage("weights");
    let points = load_points(cfg).map_err(stage)?;
    let ndvi_rasters: Vec<Raster> = cfg
        .paths
        .ndvi
        .iter()
        .map(|p| Raster::read(p))
        .collect::<Result<_>>()
        .map_err(stage)?;
    if !ndvi_rasters.is_empty() && ndvi_rasters.len() != 4 {
        return Err(Error::Config("expected 4 seasonal NDVI rasters".into()).in_stage("weights"));
    }
    let mountain = match &cfg.paths.mountain_mask {
        Some(p) => Some(Raster::read(p).map_err(stage)?),
        None => None,
    };
    let mut weight_lines = Vec::with_capacity(points.len());
    let mut weight_by_id = BTreeMap::new();
    for p in &points {
        let mut ndvi = [None; 4];
        for (si, r) in ndvi_rasters.iter().enumerate() {
            ndvi[si] = r.sample(p.lat, p.lon).map(f64::from);
        }
        let attrs = LocationAttributes {
            point_id: p.id,
            mean_ndvi_per_season: ndvi,
            is_mountain: mountain
                .as_ref()
                .and_then(|m| m.sample(p.lat, p.lon))
                .map(|v| v >= 0.5)
                .unwrap_or(false),
        };
        let (weight, factors) = location_weight(&attrs, &cfg.weights).map_err(stage)?;
        weight_by_id.insert(p.id, weight);
        weight_lines.push(WeightLine { point_id: p.id, weight, factors });
    }
    let out = cfg.paths.output_dir.join(WEIGHTS_FILE);
    write_jsonl(&out, weight_lines).map_err(stage)?;

    let selections_path = cfg.paths.output_dir.join(SELECTIONS_FILE);
    if selections_path.exists() {
        let selections: Vec<SelectionLine> = read_jsonl(&selections_path).map_err(stage)?;
        let points_by_id: BTreeMap<u64, &GeoPoint> = points.iter().map(|p| (p.id, p)).collect();
        let mut records = Vec::new();
        for line in &selections {
            if line.selection_body.excluded {
                continue;
            }
            let p = points_by_id[&line.point_id];
            let mut seasons = Vec::new();
            for (si, scene) in line.selection_body.scenes.iter().enumerate() {
                if let Some(scene) = scene {
                    let w = &line.windows.windows[si];
                    let end_unrolled = w.start_day + w.length;
                    let end_day = ((end_unrolled as i64 - 1)
                        .rem_euclid(line.windows.year_length as i64)
                        + 1) as u32;
                    seasons.push(SeasonEntry {
                        season: si as u8,
                        window_start_day: w.start_day,
                        window_end_day: end_day,
                        target_day: w.target_day,
                        scene_id: scene.scene_id.clone(),
                        datetime: scene.datetime.clone(),
                        cloud_fraction: scene.cloud_fraction,
                    });
                }
            }
            records.push(ManifestRecord {
                point_id: line.point_id,
                lat: p.lat,
                lon: p.lon,
                seasons,
                weight: weight_by_id[&line.point_id],
                patch_px: DEFAULT_PATCH_PX,
                gsd_m: DEFAULT_GSD_M,
            });
        }
        let manifest = DatasetManifest {
            header: ManifestHeader {
                format_version: FORMAT_VERSION,
                grid: cfg.grid,
                policy: cfg.selection,
                pheno: cfg.pheno,
                created,
            },
            records,
        };
        write_manifest(&manifest, &cfg.paths.output_dir.join(MANIFEST_FILE)).map_err(stage)?;
    }
    Ok(out)
}

pub fn manifest_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths.output_dir.join(MANIFEST_FILE)
}
