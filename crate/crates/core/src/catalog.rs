//! Candidate scene catalogs and per-location-per-season scene selection.
//!
//! Backends stay dumb: a query returns every record for a point whose
//! acquisition day-of-year falls in the requested cyclic window, for any
//! year in the policy range. The cloud filter and the minimum-cloud choice
//! happen at selection time.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::geogrid::GeoPoint;
use crate::phenology::{SeasonWindow, SeasonWindows};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub scene_id: String,
    pub point_id: u64,
    /// RFC 3339 UTC date of acquisition.
    pub datetime: String,
    pub cloud_fraction: f64,
}

impl SceneRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cloud_fraction) {
            return Err(Error::Invalid(format!(
                "scene {}: cloud_fraction {} out of [0,1]",
                self.scene_id, self.cloud_fraction
            )));
        }
        self.date_parts()?;
        Ok(())
    }

    /// (year, day-of-year) from the RFC 3339 date prefix.
    pub fn date_parts(&self) -> Result<(i32, u32)> {
        let date = self.datetime.get(..10).ok_or_else(|| {
            Error::Invalid(format!("scene {}: bad datetime `{}`", self.scene_id, self.datetime))
        })?;
        let mut parts = date.splitn(3, '-');
        let parse = |s: Option<&str>| -> Result<i64> {
            s.and_then(|x| x.parse().ok()).ok_or_else(|| {
                Error::Invalid(format!("scene {}: bad datetime `{}`", self.scene_id, self.datetime))
            })
        };
        let year = parse(parts.next())? as i32;
        let month = parse(parts.next())? as u32;
        let day = parse(parts.next())? as u32;
        if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
            return Err(Error::Invalid(format!(
                "scene {}: bad datetime `{}`",
                self.scene_id, self.datetime
            )));
        }
        let lengths: [u32; 12] = if crate::phenology::days_in_year(year) == 366 {
            [31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]
        } else {
            [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]
        };
        if day > lengths[(month - 1) as usize] {
            return Err(Error::Invalid(format!(
                "scene {}: bad datetime `{}`",
                self.scene_id, self.datetime
            )));
        }
        let doy = lengths[..(month - 1) as usize].iter().sum::<u32>() + day;
        Ok((year, doy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionPolicy {
    pub max_cloud: f64,
    pub year_start: i32,
    pub year_end: i32,
    pub min_images: usize,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy { max_cloud: 0.20, year_start: 2017, year_end: 2024, min_images: 2 }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_cloud > 0.0 && self.max_cloud <= 1.0) {
            return Err(Error::Config("max_cloud must be in (0, 1]".into()));
        }
        if self.year_start > self.year_end {
            return Err(Error::Config("year_start must not exceed year_end".into()));
        }
        if self.min_images < 1 {
            return Err(Error::Config("min_images must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalSelection {
    pub point_id: u64,
    /// spring, summer, autumn, winter
    pub scenes: [Option<SceneRecord>; 4],
    pub excluded: bool,
    pub exclusion_reason: Option<String>,
}

impl SeasonalSelection {
    pub fn retained(&self) -> usize {
        self.scenes.iter().filter(|s| s.is_some()).count()
    }
}

pub trait CatalogBackend: Sync {
    /// All records for the point whose day-of-year lies in `window` for any
    /// year in the policy range. No cloud filtering. Deterministic order
    /// (date, scene_id).
    fn query(
        &self,
        point: &GeoPoint,
        window: &SeasonWindow,
        year_length: u32,
        policy: &SelectionPolicy,
    ) -> Result<Vec<SceneRecord>>;
}

/// In-memory catalog loaded from a JSON-lines file of `SceneRecord`s.
pub struct LocalCatalog {
    by_point: BTreeMap<u64, Vec<SceneRecord>>,
}

impl LocalCatalog {
    pub fn new(records: Vec<SceneRecord>) -> Result<Self> {
        let mut by_point: BTreeMap<u64, Vec<SceneRecord>> = BTreeMap::new();
        for r in records {
            r.validate()?;
            by_point.entry(r.point_id).or_default().push(r);
        }
        for recs in by_point.values_mut() {
            recs.sort_by(|a, b| (&a.datetime, &a.scene_id).cmp(&(&b.datetime, &b.scene_id)));
        }
        Ok(LocalCatalog { by_point })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SceneRecord = serde_json::from_str(&line).map_err(|e| Error::Decode {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            records.push(rec);
        }
        LocalCatalog::new(records)
    }

    pub fn len(&self) -> usize {
        self.by_point.values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_point.is_empty()
    }
}

impl CatalogBackend for LocalCatalog {
    fn query(
        &self,
        point: &GeoPoint,
        window: &SeasonWindow,
        year_length: u32,
        policy: &SelectionPolicy,
    ) -> Result<Vec<SceneRecord>> {
        let Some(records) = self.by_point.get(&point.id) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for r in records {
            let (year, doy) = r.date_parts()?;
            if year < policy.year_start || year > policy.year_end {
                continue;
            }
            if window.contains(doy, year_length) {
                out.push(r.clone());
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Serialize)]
struct RemoteQuery<'a> {
    point_id: u64,
    lat: f64,
    lon: f64,
    year_start: i32,
    year_end: i32,
    window_start_day: u32,
    window_length: u32,
    limit: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    token: Option<&'a str>,
}

#[derive(Debug, Deserialize)]
struct RemotePage {
    records: Vec<SceneRecord>,
    next_token: Option<String>,
}

/// Minimal STAC-like search client: POST a JSON body, follow `next_token`
/// pagination, retry transport/5xx failures with exponential backoff.
pub struct RemoteCatalog {
    pub url: String,
    pub page_limit: usize,
    pub max_attempts: usize,
    pub backoff_base: Duration,
    client: reqwest::blocking::Client,
}

impl RemoteCatalog {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteCatalog {
            url: url.into(),
            page_limit: 100,
            max_attempts: 3,
            backoff_base: Duration::from_millis(50),
            client: reqwest::blocking::Client::new(),
        }
    }

    fn post_page(&self, body: &RemoteQuery) -> Result<RemotePage> {
        let mut last_err = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * (1 << (attempt - 1)));
            }
            match self.client.post(&self.url).json(body).send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_server_error() {
                        last_err = format!("server returned {status}");
                        continue;
                    }
                    if !status.is_success() {
                        return Err(Error::Transport(format!("server returned {status}")));
                    }
                    let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
                    return serde_json::from_str(&text).map_err(|e| Error::Decode {
                        path: self.url.clone().into(),
                        line: e.line(),
                        msg: e.to_string(),
                    });
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(Error::Transport(format!(
            "{} failed after {} attempts: {last_err}",
            self.url, self.max_attempts
        )))
    }
}

impl CatalogBackend for RemoteCatalog {
    fn query(
        &self,
        point: &GeoPoint,
        window: &SeasonWindow,
        year_length: u32,
        policy: &SelectionPolicy,
    ) -> Result<Vec<SceneRecord>> {
        let mut out = Vec::new();
        let mut token: Option<String> = None;
        loop {
            let page = self.post_page(&RemoteQuery {
                point_id: point.id,
                lat: point.lat,
                lon: point.lon,
                year_start: policy.year_start,
                year_end: policy.year_end,
                window_start_day: window.start_day,
                window_length: window.length,
                limit: self.page_limit,
                token: token.as_deref(),
            })?;
            for r in &page.records {
                r.validate()?;
            }
            out.extend(page.records);
            match page.next_token {
                Some(t) => token = Some(t),
                None => break,
            }
        }
        // server-side windowing is not trusted
        let mut filtered = Vec::new();
        for r in out {
            let (year, doy) = r.date_parts()?;
            if year >= policy.year_start
                && year <= policy.year_end
                && window.contains(doy, year_length)
            {
                filtered.push(r);
            }
        }
        filtered.sort_by(|a, b| (&a.datetime, &a.scene_id).cmp(&(&b.datetime, &b.scene_id)));
        Ok(filtered)
    }
}

/// Per season: keep candidates strictly below the cloud cap and choose the
/// least-clouded one; ties prefer the acquisition nearest the window target
/// day, then the lowest scene_id.
pub fn select_seasonal_scenes(
    point: &GeoPoint,
    windows: &SeasonWindows,
    backend: &dyn CatalogBackend,
    policy: &SelectionPolicy,
) -> Result<SeasonalSelection> {
    policy.validate()?;
    let mut scenes: [Option<SceneRecord>; 4] = [None, None, None, None];
    for (si, window) in windows.windows.iter().enumerate() {
        let candidates = backend.query(point, window, windows.year_length, policy)?;
        let mut best: Option<(SceneRecord, u32)> = None;
        for c in candidates {
            if c.cloud_fraction >= policy.max_cloud {
                continue;
            }
            let (_, doy) = c.date_parts()?;
            let dist = window.target_distance(doy, windows.year_length);
            let better = match &best {
                None => true,
                Some((b, bd)) => {
                    (c.cloud_fraction, dist, &c.scene_id) < (b.cloud_fraction, *bd, &b.scene_id)
                }
            };
            if better {
                best = Some((c, dist));
            }
        }
        scenes[si] = best.map(|(s, _)| s);
    }
    let retained = scenes.iter().filter(|s| s.is_some()).count();
    let excluded = retained < policy.min_images;
    Ok(SeasonalSelection {
        point_id: point.id,
        scenes,
        excluded,
        exclusion_reason: excluded
            .then(|| format!("only {retained} scene(s) retained, need {}", policy.min_images)),
    })
}

/// Runs selection for every point with a bounded worker pool. Output is
/// re-sorted by point id so concurrency never changes results. Fails when
/// the per-point failure fraction exceeds `max_failure_fraction`.
pub fn build_dataset(
    points: &[GeoPoint],
    windows_map: &BTreeMap<u64, SeasonWindows>,
    backend: &dyn CatalogBackend,
    policy: &SelectionPolicy,
    workers: usize,
    max_failure_fraction: f64,
) -> Result<Vec<SeasonalSelection>> {
    use rayon::prelude::*;
    policy.validate()?;
    for p in points {
        if !windows_map.contains_key(&p.id) {
            return Err(Error::Invalid(format!("no season windows for point {}", p.id)));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let results: Vec<Result<SeasonalSelection>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| select_seasonal_scenes(p, &windows_map[&p.id], backend, policy))
            .collect()
    });
    let mut selections = Vec::with_capacity(points.len());
    let mut failures = Vec::new();
    for (p, r) in points.iter().zip(results) {
        match r {
            Ok(s) => selections.push(s),
            Err(e) => failures.push(format!("point {}: {e}", p.id)),
        }
    }
    if !failures.is_empty() {
        let fraction = failures.len() as f64 / points.len() as f64;
        if fraction > max_failure_fraction {
            return Err(Error::Invalid(format!(
                "{} of {} points failed (first: {})",
                failures.len(),
                points.len(),
                failures[0]
            )));
        }
    }
    selections.sort_by_key(|s| s.point_id);
    Ok(selections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phenology::{SeasonMode, SeasonWindows};

    fn point(id: u64) -> GeoPoint {
        GeoPoint { id, lat: 10.0, lon: 20.0 }
    }

    fn scene(id: &str, pid: u64, date: &str, cloud: f64) -> SceneRecord {
        SceneRecord {
            scene_id: id.into(),
            point_id: pid,
            datetime: format!("{date}T00:00:00Z"),
            cloud_fraction: cloud,
        }
    }

    fn quarter_windows() -> SeasonWindows {
        SeasonWindows {
            mode: SeasonMode::Calendar,
            year_length: 365,
            windows: [
                SeasonWindow { start_day: 1, length: 91, target_day: 46 },
                SeasonWindow { start_day: 92, length: 91, target_day: 137 },
                SeasonWindow { start_day: 183, length: 91, target_day: 228 },
                SeasonWindow { start_day: 274, length: 92, target_day: 319 },
            ],
            fallback: false,
        }
    }

    #[test]
    fn doy_parsing() {
        assert_eq!(scene("a", 0, "2020-01-01", 0.0).date_parts().unwrap(), (2020, 1));
        assert_eq!(scene("a", 0, "2020-03-01", 0.0).date_parts().unwrap(), (2020, 61));
        assert_eq!(scene("a", 0, "2021-03-01", 0.0).date_parts().unwrap(), (2021, 60));
        assert_eq!(scene("a", 0, "2021-12-31", 0.0).date_parts().unwrap(), (2021, 365));
        assert!(scene("a", 0, "2021-02-29", 0.0).date_parts().is_err());
        assert!(scene("a", 0, "junk", 0.0).date_parts().is_err());
    }

    #[test]
    fn wraparound_window_query() {
        let catalog = LocalCatalog::new(vec![
            scene("dec", 0, "2020-12-20", 0.1),
            scene("jan", 0, "2021-01-10", 0.1),
            scene("jul", 0, "2020-07-01", 0.1),
        ])
        .unwrap();
        let window = SeasonWindow { start_day: 350, length: 35, target_day: 1 };
        let got = catalog
            .query(&point(0), &window, 365, &SelectionPolicy::default())
            .unwrap();
        let ids: Vec<&str> = got.iter().map(|r| r.scene_id.as_str()).collect();
        assert_eq!(ids, vec!["dec", "jan"]);
    }

    #[test]
    fn year_range_enforced() {
        let catalog = LocalCatalog::new(vec![
            scene("old", 0, "2015-06-01", 0.0),
            scene("ok", 0, "2020-06-01", 0.0),
        ])
        .unwrap();
        let window = SeasonWindow { start_day: 1, length: 365, target_day: 180 };
        let got = catalog
            .query(&point(0), &window, 365, &SelectionPolicy::default())
            .unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].scene_id, "ok");
    }

    #[test]
    fn minimum_cloud_wins() {
        let catalog = LocalCatalog::new(vec![
            scene("a", 0, "2020-02-01", 0.25),
            scene("b", 0, "2020-02-02", 0.10),
            scene("c", 0, "2020-02-03", 0.05),
        ])
        .unwrap();
        let sel = select_seasonal_scenes(
            &point(0),
            &quarter_windows(),
            &catalog,
            &SelectionPolicy::default(),
        )
        .unwrap();
        assert_eq!(sel.scenes[0].as_ref().unwrap().scene_id, "c");
    }

    #[test]
    fn all_cloudy_season_is_empty_and_exclusion_flag() {
        let catalog = LocalCatalog::new(vec![
            scene("a", 0, "2020-02-01", 0.20), // exactly at cap: filtered (strict <)
            scene("b", 0, "2020-05-01", 0.05),
        ])
        .unwrap();
        let sel = select_seasonal_scenes(
            &point(0),
            &quarter_windows(),
            &catalog,
            &SelectionPolicy::default(),
        )
        .unwrap();
        assert!(sel.scenes[0].is_none());
        assert_eq!(sel.retained(), 1);
        assert!(sel.excluded);
    }

    #[test]
    fn tie_breaks_by_target_distance_then_scene_id() {
        // equal clouds; day 46 is the target of the first window
        let catalog = LocalCatalog::new(vec![
            scene("far", 0, "2020-01-05", 0.10),
            scene("near", 0, "2020-02-15", 0.10), // doy 46
        ])
        .unwrap();
        let sel = select_seasonal_scenes(
            &point(0),
            &quarter_windows(),
            &catalog,
            &SelectionPolicy::default(),
        )
        .unwrap();
        assert_eq!(sel.scenes[0].as_ref().unwrap().scene_id, "near");

        let catalog = LocalCatalog::new(vec![
            scene("zz", 0, "2020-02-15", 0.10),
            scene("aa", 0, "2020-02-15", 0.10),
        ])
        .unwrap();
        let sel = select_seasonal_scenes(
            &point(0),
            &quarter_windows(),
            &catalog,
            &SelectionPolicy::default(),
        )
        .unwrap();
        assert_eq!(sel.scenes[0].as_ref().unwrap().scene_id, "aa");
    }

    #[test]
    fn selection_invariant_under_candidate_permutation() {
        let records = vec![
            scene("a", 0, "2020-02-01", 0.12),
            scene("b", 0, "2020-02-10", 0.12),
            scene("c", 0, "2020-03-01", 0.03),
        ];
        let mut reversed = records.clone();
        reversed.reverse();
        let s1 = select_seasonal_scenes(
            &point(0),
            &quarter_windows(),
            &LocalCatalog::new(records).unwrap(),
            &SelectionPolicy::default(),
        )
        .unwrap();
        let s2 = select_seasonal_scenes(
            &point(0),
            &quarter_windows(),
            &LocalCatalog::new(reversed).unwrap(),
            &SelectionPolicy::default(),
        )
        .unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn build_dataset_sorts_and_counts() {
        let points: Vec<GeoPoint> = (0..10).map(point).collect();
        let mut records = Vec::new();
        for p in &points {
            for (i, date) in ["2020-02-01", "2020-05-01", "2020-08-01", "2020-11-01"]
                .iter()
                .enumerate()
            {
                records.push(scene(&format!("s{}-{i}", p.id), p.id, date, 0.01));
            }
        }
        let catalog = LocalCatalog::new(records).unwrap();
        let windows: BTreeMap<u64, SeasonWindows> =
            points.iter().map(|p| (p.id, quarter_windows())).collect();
        let sels = build_dataset(
            &points,
            &windows,
            &catalog,
            &SelectionPolicy::default(),
            4,
            0.0,
        )
        .unwrap();
        assert_eq!(sels.len(), 10);
        for (i, s) in sels.iter().enumerate() {
            assert_eq!(s.point_id, i as u64);
            assert_eq!(s.retained(), 4);
            assert!(!s.excluded);
        }
    }

    #[test]
    fn tightening_cloud_cap_never_adds_scenes() {
        let catalog = LocalCatalog::new(vec![
            scene("a", 0, "2020-02-01", 0.15),
            scene("b", 0, "2020-05-01", 0.05),
            scene("c", 0, "2020-08-01", 0.19),
        ])
        .unwrap();
        let loose = SelectionPolicy::default();
        let tight = SelectionPolicy { max_cloud: 0.10, ..Default::default() };
        let s_loose =
            select_seasonal_scenes(&point(0), &quarter_windows(), &catalog, &loose).unwrap();
        let s_tight =
            select_seasonal_scenes(&point(0), &quarter_windows(), &catalog, &tight).unwrap();
        for i in 0..4 {
            if s_tight.scenes[i].is_some() {
                assert!(s_loose.scenes[i].is_some());
            }
        }
        assert!(s_tight.retained() <= s_loose.retained());
    }
}
