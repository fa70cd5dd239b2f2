//! Near-uniform equal-area sampling grid over the landmass.
//!
//! Latitude rows are spaced evenly in arc length; each row carries a number
//! of longitudes proportional to the circumference of its parallel, so the
//! point density is approximately constant per unit area.

use serde::{Deserialize, Serialize};

use crate::raster::Raster;
use crate::{Error, Result};

/// IUGG mean Earth radius, km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub id: u64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub spacing_km: f64,
    pub earth_radius_km: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { spacing_km: 23.0, earth_radius_km: EARTH_RADIUS_KM }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing_km > 0.0) || !self.spacing_km.is_finite() {
            return Err(Error::Config("spacing_km must be positive".into()));
        }
        if !(self.earth_radius_km > 0.0) || !self.earth_radius_km.is_finite() {
            return Err(Error::Config("earth_radius_km must be positive".into()));
        }
        if self.spacing_km >= std::f64::consts::PI * self.earth_radius_km {
            return Err(Error::Config(
                "spacing_km must be smaller than half the circumference".into(),
            ));
        }
        Ok(())
    }
}

fn round_half_away(x: f64) -> f64 {
    // f64::round rounds half away from zero, which is the documented rule.
    x.round()
}

/// Number of latitude rows for a spec.
pub fn row_count(spec: &GridSpec) -> usize {
    let dlat = (spec.spacing_km / spec.earth_radius_km).to_degrees();
    (180.0 / dlat).floor() as usize
}

/// Number of candidate longitudes in the row at `lat` degrees.
pub fn row_point_count(spec: &GridSpec, lat: f64) -> usize {
    let circumference = 2.0 * std::f64::consts::PI * spec.earth_radius_km * lat.to_radians().cos();
    (round_half_away(circumference / spec.spacing_km) as usize).max(1)
}

/// Emits grid cell centers over land, row-major south to north, west to
/// east. Mask cells >= 0.5 count as land; no-data counts as sea.
pub fn generate_grid(spec: &GridSpec, land_mask: &Raster) -> Result<Vec<GeoPoint>> {
    spec.validate()?;
    let rows = row_count(spec);
    let dlat = (spec.spacing_km / spec.earth_radius_km).to_degrees();

    let mut points = Vec::new();
    let mut id = 0u64;
    for i in 0..rows {
        let lat = -90.0 + (i as f64 + 0.5) * dlat;
        let n = row_point_count(spec, lat);
        let dlon = 360.0 / n as f64;
        for j in 0..n {
            let lon = -180.0 + (j as f64 + 0.5) * dlon;
            let is_land = matches!(land_mask.sample(lat, lon), Some(v) if v >= 0.5);
            if is_land {
                points.push(GeoPoint { id, lat, lon });
                id += 1;
            }
        }
    }
    Ok(points)
}

/// Great-circle distance in km on the sphere of radius `earth_radius_km`.
pub fn haversine_km(a: &GeoPoint, b: &GeoPoint, earth_radius_km: f64) -> f64 {
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * earth_radius_km * h.sqrt().min(1.0).asin()
}
